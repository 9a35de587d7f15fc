#include "ddsr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace ddsr {

namespace {

constexpr uint32_t kVersion = 1;
constexpr char kMagic[4] = {'D', 'D', 'S', 'R'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_i32(std::ostream& os, int32_t v) { write_u32(os, static_cast<uint32_t>(v)); }

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    DDSR_CHECK(is.good(), "checkpoint: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

int32_t read_i32(std::istream& is) { return static_cast<int32_t>(read_u32(is)); }

std::vector<int32_t> config_fields(const ModelConfig& c) {
    return {c.n_groups, c.units_per_group, c.channels,    c.window,     c.scale,
            c.img_channels, c.m_sta,       c.lora_rank,   c.lora_alpha, c.fda_channels,
            c.fda_stages,   c.up_channels};
}

ModelConfig config_from_fields(const std::vector<int32_t>& f) {
    DDSR_CHECK(f.size() == 12, "checkpoint: bad config block");
    ModelConfig c;
    c.n_groups = f[0];
    c.units_per_group = f[1];
    c.channels = f[2];
    c.window = f[3];
    c.scale = f[4];
    c.img_channels = f[5];
    c.m_sta = f[6];
    c.lora_rank = f[7];
    c.lora_alpha = f[8];
    c.fda_channels = f[9];
    c.fda_stages = f[10];
    c.up_channels = f[11];
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model) {
    std::ofstream os(path, std::ios::binary);
    DDSR_CHECK(os.good(), "cannot write checkpoint '" << path << "'");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    for (int32_t f : config_fields(model.cfg)) write_i32(os, f);
    write_u32(os, model.has_fda ? 1u : 0u);
    const auto& names = model.params.names();
    write_u32(os, static_cast<uint32_t>(names.size()));
    for (const auto& name : names) {
        const Tensor<float>& t = model.params.at(name);
        write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(0);  // dtype f32
        write_u32(os, static_cast<uint32_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) write_u32(os, static_cast<uint32_t>(t.dim(i)));
        static_assert(sizeof(float) == 4);
        os.write(reinterpret_cast<const char*>(t.ptr()),
                 static_cast<std::streamsize>(t.numel() * 4));
    }
    DDSR_CHECK(os.good(), "write failed for checkpoint '" << path << "'");
}

Model<float> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    DDSR_CHECK_DATA(is.good(), "cannot open checkpoint '" << path << "'");
    char magic[4];
    is.read(magic, 4);
    DDSR_CHECK_DATA(is.good() && std::memcmp(magic, kMagic, 4) == 0,
               "'" << path << "' is not a DDSR checkpoint");
    uint32_t version = read_u32(is);
    DDSR_CHECK(version == kVersion, "checkpoint version " << version << " unsupported");
    std::vector<int32_t> fields(12);
    for (auto& f : fields) f = read_i32(is);
    ModelConfig cfg = config_from_fields(fields);
    cfg.validate();
    bool has_fda = (read_u32(is) & 1u) != 0;

    Model<float> model = build_model<float>(cfg, 0, has_fda);
    std::set<std::string> expected(model.params.names().begin(), model.params.names().end());
    std::set<std::string> seen;
    struct LoraEntry {
        std::string target;
        bool is_down;
        Shape shape;
        std::vector<float> data;
    };
    std::vector<LoraEntry> lora_entries;

    uint32_t n_entries = read_u32(is);
    for (uint32_t e = 0; e < n_entries; ++e) {
        uint32_t len = read_u32(is);
        DDSR_CHECK(len > 0 && len < 4096, "checkpoint: bad entry name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        int dtype = is.get();
        DDSR_CHECK(dtype == 0, "checkpoint: unsupported dtype " << dtype);
        uint32_t rank = read_u32(is);
        DDSR_CHECK(rank <= 8, "checkpoint: implausible rank " << rank);
        Shape shape;
        for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(read_u32(is)));
        std::vector<float> data(static_cast<size_t>(numel(shape)));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * 4));
        DDSR_CHECK(is.good(), "checkpoint: truncated payload for '" << name << "'");
        DDSR_CHECK(seen.insert(name).second, "checkpoint: duplicate entry '" << name << "'");

        size_t lora_pos = name.find(".lora.");
        if (lora_pos != std::string::npos) {
            LoraEntry le;
            le.target = name.substr(0, lora_pos);
            le.is_down = name.substr(lora_pos) == ".lora.down";
            DDSR_CHECK(le.is_down || name.substr(lora_pos) == ".lora.up",
                       "checkpoint: unknown adapter entry '" << name << "'");
            le.shape = std::move(shape);
            le.data = std::move(data);
            lora_entries.push_back(std::move(le));
            continue;
        }
        DDSR_CHECK(expected.count(name), "checkpoint: unexpected entry '" << name << "'");
        Tensor<float>& t = model.params.at(name);
        DDSR_CHECK(t.shape() == shape, "checkpoint: shape mismatch for '"
                                           << name << "': file " << shape_str(shape)
                                           << " vs model " << shape_str(t.shape()));
        t.data() = std::move(data);
    }
    for (const auto& name : expected)
        DDSR_CHECK(seen.count(name), "checkpoint: missing parameter '" << name << "'");

    // reattach adapters
    std::map<std::string, std::pair<const LoraEntry*, const LoraEntry*>> pairs;
    for (const auto& le : lora_entries) {
        if (le.is_down)
            pairs[le.target].first = &le;
        else
            pairs[le.target].second = &le;
    }
    float scale = static_cast<float>(cfg.lora_scale());
    for (const auto& [target, pr] : pairs) {
        DDSR_CHECK(pr.first && pr.second, "checkpoint: incomplete adapter for '" << target << "'");
        DDSR_CHECK(model.params.has(target + ".weight"),
                   "checkpoint: adapter targets unknown linear '" << target << "'");
        Tensor<float>& down = model.params.add(
            target + ".lora.down", Tensor<float>::from(pr.first->shape, pr.first->data));
        Tensor<float>& up = model.params.add(target + ".lora.up",
                                             Tensor<float>::from(pr.second->shape, pr.second->data));
        model.adapters[target] = LoraAdapter<float>{down, up, scale};
    }
    return model;
}

}  // namespace ddsr
