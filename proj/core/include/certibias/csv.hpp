#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace certibias {

// Headerless CSV of decimal numbers, LF line endings. Floats are written in
// the shortest form that parses back to the identical double, so a
// write/read cycle is bitwise lossless.
std::string format_double(double v);

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

void write_int_csv(const std::filesystem::path& path, const std::vector<int>& values);
std::vector<int> read_int_csv(const std::filesystem::path& path);

}  // namespace certibias
