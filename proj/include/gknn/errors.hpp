// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gknn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GKNN_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

GKNN_DEFINE_ERROR(DimensionError);
GKNN_DEFINE_ERROR(NumericError);
GKNN_DEFINE_ERROR(ParameterError);
GKNN_DEFINE_ERROR(InputError);
GKNN_DEFINE_ERROR(ContractError);
GKNN_DEFINE_ERROR(FormatError);
GKNN_DEFINE_ERROR(TrainingError);
GKNN_DEFINE_ERROR(SpecError);
GKNN_DEFINE_ERROR(ConfigError);
// Raised when a pipeline stage runs before the stage that produces its input.
GKNN_DEFINE_ERROR(MissingArtifactError);

#undef GKNN_DEFINE_ERROR

}  // namespace gknn
