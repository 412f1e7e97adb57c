#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "listap/numerics.hpp"

namespace listap {

// DESC1 layout (little-endian): "DESC1\0", u32 count, u32 dim, count*dim float32 row-major.
inline constexpr char kDescMagic[6] = {'D', 'E', 'S', 'C', '1', '\0'};

void write_desc(const std::filesystem::path& path, const Matrix& rows);
// Rows are widened to double. Validation of unit norm is left to DescriptorMatrix.
Matrix read_desc(const std::filesystem::path& path);

struct LabelRow {
  std::string id;
  std::string class_label;
};

void write_labels(const std::filesystem::path& path, const std::vector<LabelRow>& rows);
std::vector<LabelRow> read_labels(const std::filesystem::path& path);

// "<desc path>.labels.csv"
std::filesystem::path labels_path_for(const std::filesystem::path& desc_path);

struct LabeledDescriptors {
  Matrix rows;
  std::vector<std::string> ids;
  std::vector<std::string> classes;  // empty when no labels file exists
};

// Reads a DESC1 file plus its companion labels file when present; ids default
// to row indices otherwise.
LabeledDescriptors read_labeled(const std::filesystem::path& desc_path);
void write_labeled(const std::filesystem::path& desc_path, const LabeledDescriptors& data);

}  // namespace listap
