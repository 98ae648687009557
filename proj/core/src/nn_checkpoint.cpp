#include "wuyun/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace wuyun::nn {

namespace {

constexpr char kMagic[4] = {'W', 'Y', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char(v >> (8 * i));
    out.write(b, 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char(v >> (8 * i));
    out.write(b, 8);
}

void put_blob(std::ofstream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), std::streamsize(s.size()));
}

void put_floats(std::ofstream& out, const std::vector<float>& v) {
    put_u64(out, v.size());
    for (const float f : v) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

struct Reader {
    std::ifstream in;
    explicit Reader(const std::filesystem::path& p) : in(p, std::ios::binary) {
        if (!in) throw MissingArtifact("cannot open checkpoint " + p.string());
    }
    std::uint32_t u32() {
        char b[4];
        if (!in.read(b, 4)) throw MalformedFile("truncated checkpoint");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(b[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        char b[8];
        if (!in.read(b, 8)) throw MalformedFile("truncated checkpoint");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(b[i])) << (8 * i);
        return v;
    }
    std::string blob() {
        const auto n = u64();
        std::string s(n, '\0');
        if (n && !in.read(s.data(), std::streamsize(n))) throw MalformedFile("truncated checkpoint");
        return s;
    }
    std::vector<float> floats() {
        const auto n = u64();
        std::vector<float> v(n);
        for (auto& f : v) {
            const std::uint32_t bits = u32();
            std::memcpy(&f, &bits, 4);
        }
        return v;
    }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifact("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_blob(out, ckpt.config.to_json());
    put_u64(out, ckpt.vocab_hash);
    put_u64(out, ckpt.seed);
    put_u64(out, ckpt.train_step);

    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& rec : ckpt.manifest)
        manifest.push_back({rec.name, rec.rows, rec.cols, rec.offset});
    put_blob(out, manifest.dump());
    put_floats(out, ckpt.payload);

    put_u32(out, ckpt.has_optimizer ? 1 : 0);
    if (ckpt.has_optimizer) {
        put_u64(out, std::uint64_t(ckpt.opt_steps));
        put_floats(out, ckpt.opt_m);
        put_floats(out, ckpt.opt_v);
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Reader r(path);
    char magic[4];
    if (!r.in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw MalformedFile(path.string() + " is not a wuyun checkpoint");
    if (r.u32() != kVersion) throw MalformedFile("unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.config = ModelConfig::from_json(r.blob());
    ckpt.vocab_hash = r.u64();
    ckpt.seed = r.u64();
    ckpt.train_step = r.u64();
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(r.blob());
    } catch (const nlohmann::json::exception& e) {
        throw MalformedFile(std::string("bad checkpoint manifest: ") + e.what());
    }
    for (const auto& rec : manifest)
        ckpt.manifest.push_back({rec.at(0).get<std::string>(), rec.at(1).get<int>(),
                                 rec.at(2).get<int>(), rec.at(3).get<std::uint64_t>()});
    ckpt.payload = r.floats();
    if (r.u32() != 0) {
        ckpt.has_optimizer = true;
        ckpt.opt_steps = long(r.u64());
        ckpt.opt_m = r.floats();
        ckpt.opt_v = r.floats();
    }
    return ckpt;
}

}  // namespace wuyun::nn
