#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vaentropy/data/dataset.hpp"

namespace vaentropy::data {

// IDX layout (all integers big-endian):
//   [0..1]  zero bytes
//   [2]     element type: 0x08 unsigned byte, 0x0E float64
//   [3]     number of dimensions (1..3)
//   [4..]   one u32 per dimension
//   then    product(dims) elements, row-major
// Unsigned-byte payloads are scaled to [0, 1] by /255. A 1-d file (labels)
// loads as an N x 1 dataset; 3-d files (images) flatten to N x (rows * cols).
enum class IdxElement : std::uint8_t { ubyte = 0x08, float64 = 0x0E };

Dataset parse_idx(std::span<const std::uint8_t> bytes, std::string name = "idx");
Dataset load_idx(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_idx(const Tensor& x, IdxElement element);
/// Writes x as a 2-d IDX file. ubyte requires values in [0, 1] and stores round(255 v).
void write_idx(const std::filesystem::path& path, const Tensor& x,
               IdxElement element = IdxElement::float64);

/// Numeric CSV: comma-separated, '\n' or "\r\n" line ends, '.' radix. The
/// first line is treated as a header when any of its cells is non-numeric.
/// Empty cells parse as std::nullopt.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::optional<double>>> rows;
    std::vector<std::size_t> row_lines;  // 1-based source line of each row
};

CsvTable parse_csv_table(std::string_view text);
CsvTable read_csv_table(const std::filesystem::path& path);

/// N x D dataset from CSV; every cell must be numeric and rows equal length.
Dataset parse_csv(std::string_view text, std::string name = "csv");
Dataset load_csv(const std::filesystem::path& path);

/// Shortest representation that parses back to the identical double.
std::string format_double(double v);

void write_csv(const std::filesystem::path& path, const Tensor& x,
               const std::vector<std::string>& header = {});

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace vaentropy::data
