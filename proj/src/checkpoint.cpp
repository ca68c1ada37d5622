#include "tempagg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "tempagg/error.hpp"

namespace tempagg {

namespace {

constexpr char kMagic[5] = {'T', 'A', 'G', 'G', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

class Reader {
public:
    Reader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t offset() const { return pos_; }

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        pos_ += 4;
        return v;
    }

    std::string str(std::size_t n, const char* field) {
        need(n, field);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    float f32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        pos_ += 4;
        return std::bit_cast<float>(v);
    }

private:
    void need(std::size_t n, const char* field) {
        if (pos_ + n > bytes_.size()) {
            fail("io", name_ + ": truncated while reading " + field + " at offset " +
                           std::to_string(pos_));
        }
    }

    std::string bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, TensorPtr>>& entries) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    for (const auto& [name, tensor] : entries) {
        put_u32_le(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        put_u32_le(out, static_cast<std::uint32_t>(tensor->shape.size()));
        for (const auto e : tensor->shape) put_u32_le(out, static_cast<std::uint32_t>(e));
        for (const float v : tensor->data) put_u32_le(out, std::bit_cast<std::uint32_t>(v));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("io", "cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail("io", "write failed for " + path.string());
}

std::vector<std::pair<std::string, TensorPtr>> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("io", "cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r(std::move(bytes), path.string());
    if (r.str(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
        fail("io", path.string() + ": bad magic, not a TAGG1 checkpoint");
    }

    std::vector<std::pair<std::string, TensorPtr>> entries;
    while (!r.at_end()) {
        const std::uint32_t name_len = r.u32("name length");
        std::string name = r.str(name_len, "name");
        const std::uint32_t rank = r.u32("rank");
        std::vector<std::int64_t> shape(rank);
        std::int64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<std::int64_t>(r.u32("extent"));
            if (shape[i] <= 0) {
                fail("io", path.string() + ": parameter '" + name + "' has extent " +
                               std::to_string(shape[i]) + " at offset " + std::to_string(r.offset()));
            }
            count *= shape[i];
        }
        std::vector<float> data(static_cast<std::size_t>(count));
        for (auto& v : data) v = r.f32("float data");
        entries.emplace_back(std::move(name), make_tensor<float>(std::move(shape), std::move(data)));
    }
    return entries;
}

} // namespace tempagg
