#include "vaentropy/data/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <fstream>
#include <iterator>

#include "vaentropy/errors.hpp"

namespace vaentropy::data {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at)
{
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
           (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

double read_be_double(std::span<const std::uint8_t> b, std::size_t at)
{
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < 8; ++i) bits = (bits << 8) | b[at + i];
    return std::bit_cast<double>(bits);
}

void put_be_double(std::vector<std::uint8_t>& out, double v)
{
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(bits >> shift));
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view cell)
{
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
    return v;
}

std::vector<std::string_view> split_cells(std::string_view line)
{
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset parse_idx(std::span<const std::uint8_t> bytes, std::string name)
{
    if (bytes.size() < 4) throw DataError("idx: file shorter than the 4-byte magic", 0);
    const std::uint8_t type = bytes[2];
    const std::uint8_t ndims = bytes[3];
    const bool type_ok = type == static_cast<std::uint8_t>(IdxElement::ubyte) ||
                         type == static_cast<std::uint8_t>(IdxElement::float64);
    if (bytes[0] != 0 || bytes[1] != 0 || !type_ok || ndims < 1 || ndims > 3) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "idx: bad magic 0x%02X%02X%02X%02X at offset 0", bytes[0],
                      bytes[1], bytes[2], bytes[3]);
        throw DataError(buf, 0);
    }
    const std::size_t header = 4 + 4 * std::size_t{ndims};
    if (bytes.size() < header)
        throw DataError("idx: truncated header, expected " + std::to_string(header) +
                            " bytes, available " + std::to_string(bytes.size()),
                        bytes.size());
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < ndims; ++i) {
        const std::uint32_t d = read_be32(bytes, 4 + 4 * i);
        if (d == 0) throw DataError("idx: zero-length dimension", 4 + 4 * i);
        dims.push_back(d);
    }
    const std::size_t width = type == static_cast<std::uint8_t>(IdxElement::ubyte) ? 1 : 8;
    std::size_t count = 1;
    for (auto d : dims) {
        if (count > (std::numeric_limits<std::size_t>::max() / width) / d)
            throw DataError("idx: dimension product overflows", 4);
        count *= d;
    }
    const std::size_t expected = count * width;
    const std::size_t available = bytes.size() - header;
    if (available < expected)
        throw DataError("idx: truncated payload, expected " + std::to_string(expected) +
                            " bytes, available " + std::to_string(available),
                        header + available);
    if (available > expected)
        throw DataError("idx: " + std::to_string(available - expected) +
                            " trailing bytes after payload",
                        header + expected);

    const std::size_t n = dims.front();
    Tensor x({n, count / n});
    for (std::size_t i = 0; i < count; ++i) {
        x[i] = width == 1 ? static_cast<double>(bytes[header + i]) / 255.0
                          : read_be_double(bytes, header + 8 * i);
    }
    Dataset ds{std::move(x), std::move(name), Provenance::file, {}};
    ds.validate();
    return ds;
}

Dataset load_idx(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return parse_idx(bytes, path.filename().string());
}

std::vector<std::uint8_t> encode_idx(const Tensor& x, IdxElement element)
{
    require_matrix(x, x.cols(), "encode_idx");
    std::vector<std::uint8_t> out{0, 0, static_cast<std::uint8_t>(element), 2};
    put_be32(out, static_cast<std::uint32_t>(x.rows()));
    put_be32(out, static_cast<std::uint32_t>(x.cols()));
    for (double v : x.values()) {
        if (element == IdxElement::ubyte) {
            if (!(v >= 0.0 && v <= 1.0)) throw DataError("idx ubyte payload needs values in [0, 1]");
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        } else {
            put_be_double(out, v);
        }
    }
    return out;
}

void write_idx(const std::filesystem::path& path, const Tensor& x, IdxElement element)
{
    const auto bytes = encode_idx(x, element);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CsvTable parse_csv_table(std::string_view text)
{
    CsvTable table;
    std::size_t line_no = 0;
    std::size_t width = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;

        const auto cells = split_cells(line);
        std::vector<std::optional<double>> row;
        row.reserve(cells.size());
        bool numeric = true;
        std::size_t bad_column = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (cells[c].empty()) {
                row.emplace_back();
                continue;
            }
            auto v = parse_number(cells[c]);
            if (!v && numeric) {
                numeric = false;
                bad_column = c + 1;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (table.header.empty() && table.rows.empty()) {
                for (auto c : cells) table.header.emplace_back(c);
                width = cells.size();
                continue;
            }
            throw DataError("csv: non-numeric cell at line " + std::to_string(line_no) +
                                ", column " + std::to_string(bad_column),
                            line_no);
        }
        if (width == 0) width = row.size();
        if (row.size() != width)
            throw DataError("csv: ragged row at line " + std::to_string(line_no) + " (" +
                                std::to_string(row.size()) + " cells, expected " +
                                std::to_string(width) + ")",
                            line_no);
        table.rows.push_back(std::move(row));
        table.row_lines.push_back(line_no);
    }
    return table;
}

CsvTable read_csv_table(const std::filesystem::path& path) { return parse_csv_table(read_text(path)); }

Dataset parse_csv(std::string_view text, std::string name)
{
    const CsvTable table = parse_csv_table(text);
    if (table.rows.empty()) throw DataError("csv: no data rows", 0);
    const std::size_t n = table.rows.size(), d = table.rows.front().size();
    Tensor x({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const auto& cell = table.rows[i][j];
            if (!cell)
                throw DataError("csv: empty cell at line " + std::to_string(table.row_lines[i]) +
                                    ", column " + std::to_string(j + 1),
                                table.row_lines[i]);
            x(i, j) = *cell;
        }
    }
    Dataset ds{std::move(x), std::move(name), Provenance::file, {}};
    ds.validate();
    return ds;
}

Dataset load_csv(const std::filesystem::path& path)
{
    return parse_csv(read_text(path), path.filename().string());
}

std::string format_double(double v)
{
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void write_csv(const std::filesystem::path& path, const Tensor& x,
               const std::vector<std::string>& header)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << '\n';
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) out << (c ? "," : "") << format_double(x(r, c));
        out << '\n';
    }
}

}  // namespace vaentropy::data
