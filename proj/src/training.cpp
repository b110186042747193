#include "gazevqa/training.hpp"

#include <cstring>
#include <fstream>

using nlohmann::json;

namespace gazevqa {

Regime regime_from_string(const std::string& s) {
    if (s == "full") {
        return Regime::Full;
    }
    if (s == "mapping") {
        return Regime::Mapping;
    }
    if (s == "adapter_only") {
        return Regime::AdapterOnly;
    }
    throw ConfigError("unknown regime '" + s + "' (expected full|mapping|adapter_only)");
}

const char* to_string(Regime r) {
    switch (r) {
    case Regime::Full: return "full";
    case Regime::Mapping: return "mapping";
    case Regime::AdapterOnly: return "adapter_only";
    }
    return "?";
}

namespace {

constexpr char kBlobMagic[4] = {'G', 'V', 'T', 'B'};
constexpr std::uint32_t kBlobVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                                static_cast<unsigned char>((v >> 16) & 0xFF),
                                static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& ctx) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) {
        throw FormatError("truncated checkpoint blob: " + ctx);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void save_group(const std::filesystem::path& path, const std::vector<nn::Parameter<float>*>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write checkpoint blob: " + path.string());
    }
    out.write(kBlobMagic, 4);
    write_u32(out, kBlobVersion);
    write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
        write_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u32(out, static_cast<std::uint32_t>(p->node->val.rows));
        write_u32(out, static_cast<std::uint32_t>(p->node->val.cols));
        out.write(reinterpret_cast<const char*>(p->node->val.v.data()),
                  static_cast<std::streamsize>(p->node->val.size() * sizeof(float)));
    }
    if (!out) {
        throw FormatError("failed writing checkpoint blob: " + path.string());
    }
}

void load_group(const std::filesystem::path& path, const std::vector<nn::Parameter<float>*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open checkpoint blob: " + path.string());
    }
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kBlobMagic, 4) != 0) {
        throw FormatError("bad checkpoint blob magic in " + path.string());
    }
    if (read_u32(in, path.string()) != kBlobVersion) {
        throw FormatError("unsupported checkpoint blob version in " + path.string());
    }
    const std::uint32_t count = read_u32(in, path.string());
    if (count != params.size()) {
        throw FormatError("checkpoint group in " + path.string() + " holds " + std::to_string(count) +
                          " tensors, bundle expects " + std::to_string(params.size()));
    }
    for (auto* p : params) {
        const std::uint32_t name_len = read_u32(in, path.string());
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len)) {
            throw FormatError("truncated tensor name in " + path.string());
        }
        if (name != p->name) {
            throw FormatError("tensor name mismatch in " + path.string() + ": stored '" + name + "', expected '" +
                              p->name + "'");
        }
        const auto rows = static_cast<int>(read_u32(in, path.string()));
        const auto cols = static_cast<int>(read_u32(in, path.string()));
        if (rows != p->node->val.rows || cols != p->node->val.cols) {
            throw FormatError("shape mismatch for tensor '" + name + "': stored " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", bundle has " + std::to_string(p->node->val.rows) + "x" +
                              std::to_string(p->node->val.cols));
        }
        in.read(reinterpret_cast<char*>(p->node->val.v.data()),
                static_cast<std::streamsize>(p->node->val.size() * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(p->node->val.size() * sizeof(float))) {
            throw FormatError("truncated tensor payload for '" + name + "' in " + path.string());
        }
    }
}

} // namespace

void save_checkpoint(ModelBundle<float>& bundle, const std::filesystem::path& dir, const std::string& regime_tag) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> groups = {"decoder", "mapping"};
    save_group(dir / "decoder.bin", bundle.group_decoder());
    save_group(dir / "mapping.bin", bundle.group_mapping());
    if (!bundle.group_adapters().empty()) {
        save_group(dir / "adapters.bin", bundle.group_adapters());
        groups.push_back("adapters");
    }
    json manifest;
    manifest["format"] = "gazevqa-checkpoint";
    manifest["version"] = kBlobVersion;
    manifest["config"] = bundle.cfg.to_json();
    manifest["vocab"] = bundle.decoder.vocab;
    manifest["regime"] = regime_tag;
    manifest["groups"] = groups;
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw FormatError("cannot write checkpoint manifest in " + dir.string());
    }
    out << manifest.dump(2) << "\n";
}

namespace {

json read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw TrainingError("missing checkpoint manifest in " + dir.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
    }
    if (j.value("format", std::string()) != "gazevqa-checkpoint") {
        throw FormatError("not a checkpoint manifest: " + (dir / "manifest.json").string());
    }
    return j;
}

} // namespace

void load_checkpoint_into(ModelBundle<float>& bundle, const std::filesystem::path& dir) {
    const json manifest = read_manifest(dir);
    const auto groups = manifest.value("groups", std::vector<std::string>{});
    for (const auto& gname : groups) {
        if (gname == "decoder") {
            load_group(dir / "decoder.bin", bundle.group_decoder());
        } else if (gname == "mapping") {
            load_group(dir / "mapping.bin", bundle.group_mapping());
        } else if (gname == "adapters") {
            if (bundle.group_adapters().empty()) {
                throw FormatError("checkpoint provides adapters but the bundle has none");
            }
            load_group(dir / "adapters.bin", bundle.group_adapters());
        } else {
            throw FormatError("unknown parameter group '" + gname + "' in checkpoint manifest");
        }
    }
    // a baseline checkpoint loaded into an adapter bundle leaves the adapters
    // at identity init, which preserves the baseline function exactly
}

ModelBundle<float> load_checkpoint(const std::filesystem::path& dir) {
    const json manifest = read_manifest(dir);
    const BundleConfig cfg = BundleConfig::from_json(manifest.at("config"));
    const int vocab = manifest.at("vocab").get<int>();
    ModelBundle<float> bundle(cfg, vocab);
    load_checkpoint_into(bundle, dir);
    return bundle;
}

} // namespace gazevqa
