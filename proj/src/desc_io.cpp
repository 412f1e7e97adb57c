#include "listap/desc_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "listap/error.hpp"

namespace listap {
namespace {

static_assert(sizeof(float) == 4);

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(Errc::Format, "truncated DESC1 header");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

}  // namespace

void write_desc(const std::filesystem::path& path, const Matrix& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  out.write(kDescMagic, sizeof(kDescMagic));
  put_u32(out, static_cast<std::uint32_t>(rows.rows()));
  put_u32(out, static_cast<std::uint32_t>(rows.cols()));
  for (double v : rows.data()) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    put_u32(out, bits);
  }
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

Matrix read_desc(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  char magic[sizeof(kDescMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kDescMagic, sizeof(magic)) != 0) {
    throw Error(Errc::Format, path.string() + " is not a DESC1 file");
  }
  const std::uint32_t count = get_u32(in);
  const std::uint32_t dim = get_u32(in);
  Matrix m(count, dim);
  for (double& v : m.data()) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(Errc::Format, "truncated DESC1 payload in " + path.string());
    const std::uint32_t bits = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) |
                               (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
    v = static_cast<double>(std::bit_cast<float>(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(Errc::Format, "trailing bytes after DESC1 payload in " + path.string());
  }
  return m;
}

void write_labels(const std::filesystem::path& path, const std::vector<LabelRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  for (const auto& r : rows) out << r.id << ',' << r.class_label << '\n';
}

std::vector<LabelRow> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<LabelRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error(Errc::Format, path.string() + ":" + std::to_string(line_no) + ": expected id,class_label");
    }
    rows.push_back({line.substr(0, comma), line.substr(comma + 1)});
  }
  return rows;
}

std::filesystem::path labels_path_for(const std::filesystem::path& desc_path) {
  return desc_path.string() + ".labels.csv";
}

LabeledDescriptors read_labeled(const std::filesystem::path& desc_path) {
  LabeledDescriptors out;
  out.rows = read_desc(desc_path);
  const auto lp = labels_path_for(desc_path);
  if (std::filesystem::exists(lp)) {
    auto labels = read_labels(lp);
    if (labels.size() != out.rows.rows()) {
      throw Error(Errc::DimensionMismatch, lp.string() + " has " + std::to_string(labels.size()) +
                                               " rows, descriptors have " + std::to_string(out.rows.rows()));
    }
    for (auto& l : labels) {
      out.ids.push_back(std::move(l.id));
      out.classes.push_back(std::move(l.class_label));
    }
  } else {
    for (std::size_t i = 0; i < out.rows.rows(); ++i) out.ids.push_back(std::to_string(i));
  }
  return out;
}

void write_labeled(const std::filesystem::path& desc_path, const LabeledDescriptors& data) {
  write_desc(desc_path, data.rows);
  if (!data.ids.empty()) {
    std::vector<LabelRow> rows;
    for (std::size_t i = 0; i < data.ids.size(); ++i) {
      rows.push_back({data.ids[i], i < data.classes.size() ? data.classes[i] : std::string()});
    }
    write_labels(labels_path_for(desc_path), rows);
  }
}

}  // namespace listap
