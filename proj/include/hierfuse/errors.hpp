// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hierfuse {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands (message names both shapes).
struct DimensionError : Error {
  using Error::Error;
};

// A caller violated an operation's precondition.
struct ContractError : Error {
  using Error::Error;
};

// An invalid model/run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input text; message carries the line number when applicable.
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input that violates the dataset schema.
struct SchemaError : Error {
  using Error::Error;
};

// Missing or unreadable file; message names the path.
struct IoError : Error {
  using Error::Error;
};

}  // namespace hierfuse
