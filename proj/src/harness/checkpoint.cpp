#include "vaentropy/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "vaentropy/data/io.hpp"
#include "vaentropy/errors.hpp"

namespace vaentropy::harness {

namespace {

constexpr char kMagic[4] = {'V', 'A', 'E', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v)
{
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return at_; }

    void need(std::size_t n, const char* what) const
    {
        if (bytes_.size() - at_ < n)
            throw DataError("checkpoint truncated reading " + std::string(what) + " at offset " +
                                std::to_string(at_) + ": expected " + std::to_string(n) +
                                " bytes, available " + std::to_string(bytes_.size() - at_),
                            at_);
    }

    std::uint32_t u32(const char* what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[at_ + i]} << (8 * i);
        at_ += 4;
        return v;
    }

    double f64()
    {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes_[at_ + i]} << (8 * i);
        at_ += 8;
        return std::bit_cast<double>(bits);
    }

    std::string text(std::size_t n)
    {
        need(n, "parameter name");
        std::string s(reinterpret_cast<const char*>(bytes_.data() + at_), n);
        at_ += n;
        return s;
    }

    bool at_end() const noexcept { return at_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t at_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const autodiff::ParamVector& params)
{
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(params.slot_count()));
    for (const auto& [name, t] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.values()) put_f64(out, v);
    }
    return out;
}

autodiff::ParamVector decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic at offset 0 (expected \"VAEC\")", 0);
    Reader r(bytes);
    r.text(4);
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version) +
                            " at offset 4",
                        4);
    const std::uint32_t count = r.u32("record count");

    autodiff::ParamVector params;
    for (std::uint32_t rec = 0; rec < count; ++rec) {
        const std::uint32_t name_len = r.u32("name length");
        const std::string name = r.text(name_len);
        const std::size_t rank_at = r.offset();
        const std::uint32_t rank = r.u32("rank");
        if (rank == 0) throw DataError("checkpoint: zero rank for '" + name + "'", rank_at);
        std::vector<std::size_t> shape;
        std::size_t elements = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const std::size_t dim_at = r.offset();
            const std::uint32_t d = r.u32("dimension");
            if (d == 0) throw DataError("checkpoint: zero dimension in '" + name + "'", dim_at);
            if (elements > std::numeric_limits<std::size_t>::max() / 8 / d)
                throw DataError("checkpoint: dimension product overflows for '" + name + "'",
                                dim_at);
            elements *= d;
            shape.push_back(d);
        }
        r.need(elements * 8, "payload");
        std::vector<double> values(elements);
        for (auto& v : values) v = r.f64();
        if (params.contains(name))
            throw DataError("checkpoint: duplicate parameter '" + name + "'", rank_at);
        params.set(name, autodiff::Tensor(std::move(shape), std::move(values)));
    }
    if (!r.at_end())
        throw DataError("checkpoint: trailing bytes after the last record", r.offset());
    return params;
}

void checkpoint_save(const models::VaeModel& model, const std::filesystem::path& path)
{
    const auto bytes = encode_checkpoint(model.params());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + path.string() + "'");
}

models::VaeModel checkpoint_load(const std::filesystem::path& path)
{
    const auto params = decode_checkpoint(data::read_file_bytes(path));
    models::VaeModel model(models::VaeModel::infer_architecture(params));
    model.set_params(params);
    return model;
}

}  // namespace vaentropy::harness
