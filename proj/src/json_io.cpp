// Copyright 2026 The gknn Authors
// SPDX-License-Identifier: Apache-2.0

#include "gknn/json_io.hpp"

#include <fstream>

#include "gknn/errors.hpp"

namespace gknn {

Json matrix_to_json(const Matrix& m) {
  return Json{{"shape", {m.rows(), m.cols()}},
              {"data", std::vector<float>(m.flat().begin(), m.flat().end())}};
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  try {
    const auto rows = j.at("shape").at(0).get<std::size_t>();
    const auto cols = j.at("shape").at(1).get<std::size_t>();
    const auto data = j.at("data").get<std::vector<float>>();
    if (data.size() != rows * cols) {
      throw FormatError(field + ": data length " + std::to_string(data.size()) +
                        " does not match shape " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.flat().begin());
    return m;
  } catch (const Json::exception& e) {
    throw FormatError(field + ": " + e.what());
  }
}

Json vector_to_json(const Vector& v) { return Json{{"shape", {v.size()}}, {"data", v}}; }

Vector vector_from_json(const Json& j, const std::string& field, std::size_t expected_size) {
  try {
    auto data = j.at("data").get<Vector>();
    if (data.size() != expected_size) {
      throw FormatError(field + ": expected " + std::to_string(expected_size) + " values, got " +
                        std::to_string(data.size()));
    }
    return data;
  } catch (const Json::exception& e) {
    throw FormatError(field + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace gknn
