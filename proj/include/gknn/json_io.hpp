// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

// Shared checkpoint encoding: every parameter block is
// {"shape": [rows, cols], "data": [row-major floats]}.

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "gknn/numerics.hpp"

namespace gknn {

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& field);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j, const std::string& field, std::size_t expected_size);

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

}  // namespace gknn
