#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flexkernel/flexconv.hpp"
#include "flexkernel/flexnet.hpp"
#include "flexkernel/io.hpp"
#include "flexkernel/kernelgen.hpp"
#include "flexkernel/optim.hpp"

namespace flexkernel {

// Checkpoint layout: a directory holding one binary tensor file per field
// plus a plain-text manifest listing metadata and the ordered fields.
//
//   manifest.txt
//     flexkernel-checkpoint v1
//     meta <key> <value>
//     field <name> <file> <extent,extent,...>
//   <name>.fxt
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> fields;

    const Tensor& field(const std::string& name) const {
        for (const auto& [n, t] : fields)
            if (n == name) return t;
        throw IoError("checkpoint: missing field '" + name + "'");
    }

    bool has_field(const std::string& name) const {
        for (const auto& [n, t] : fields)
            if (n == name) return true;
        return false;
    }

    std::string meta_at(const std::string& key) const {
        auto it = meta.find(key);
        require(it != meta.end(), "checkpoint: missing meta key '" + key + "'");
        return it->second;
    }

    std::size_t meta_count(const std::string& key) const {
        return static_cast<std::size_t>(std::stoull(meta_at(key)));
    }
};

inline void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
    std::filesystem::create_directories(dir);
    std::ofstream man(dir + "/manifest.txt", std::ios::binary);
    if (!man) throw IoError("save_checkpoint: cannot open manifest in " + dir);
    man << "flexkernel-checkpoint v1\n";
    for (const auto& [k, v] : ckpt.meta) man << "meta " << k << " " << v << "\n";
    for (const auto& [name, tensor] : ckpt.fields) {
        const std::string file = name + ".fxt";
        tensor.save_file(dir + "/" + file);
        man << "field " << name << " " << file;
        man << " ";
        for (std::size_t i = 0; i < tensor.rank(); ++i)
            man << (i ? "," : "") << tensor.extent(i);
        if (tensor.rank() == 0) man << "-";
        man << "\n";
    }
    if (!man) throw IoError("save_checkpoint: manifest write failed");
}

inline Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream man(dir + "/manifest.txt");
    if (!man) throw IoError("load_checkpoint: cannot open manifest in " + dir);
    std::string line;
    std::getline(man, line);
    if (line != "flexkernel-checkpoint v1")
        throw IoError("load_checkpoint: unrecognized manifest header");
    Checkpoint ckpt;
    while (std::getline(man, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "meta") {
            std::string key, value;
            ss >> key;
            std::getline(ss, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            ckpt.meta[key] = value;
        } else if (tag == "field") {
            std::string name, file;
            ss >> name >> file;
            ckpt.fields.emplace_back(name, Tensor::load_file(dir + "/" + file));
        } else {
            throw IoError("load_checkpoint: unrecognized manifest line: " + line);
        }
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// Parameter skeletons (zero tensors with the right shapes, filled from a
// checkpoint's fields).
// ---------------------------------------------------------------------------

inline MagnetParams empty_magnet(std::size_t layers, std::size_t n_hidden, std::size_t n_in,
                                 std::size_t n_out, std::size_t dims, bool isotropic) {
    MagnetParams p;
    p.dims = dims;
    p.n_hidden = n_hidden;
    p.n_in = n_in;
    p.n_out = n_out;
    for (std::size_t l = 0; l < layers; ++l) {
        GaborLayerParams g;
        g.isotropic = isotropic;
        g.gamma_x_raw = Tensor({n_hidden});
        g.mu_x = Tensor({n_hidden});
        if (dims == 2) {
            if (!isotropic) g.gamma_y_raw = Tensor({n_hidden});
            g.mu_y = Tensor({n_hidden});
        }
        g.sine_w = Tensor({n_hidden, dims});
        g.sine_b = Tensor({n_hidden});
        p.gabor.push_back(std::move(g));
        if (l > 0) {
            p.lin_w.push_back(Tensor({n_hidden, n_hidden}));
            p.lin_b.push_back(Tensor({n_hidden}));
        }
    }
    p.out_w = Tensor({n_out * n_in, n_hidden});
    p.out_b = Tensor({n_out * n_in});
    return p;
}

inline GaussianMaskParams empty_mask(std::size_t dims) {
    GaussianMaskParams m;
    m.dims = dims;
    m.mu_x = Tensor::scalar(0.0);
    m.raw_sigma_x = Tensor::scalar(1.0);
    if (dims == 2) {
        m.mu_y = Tensor::scalar(0.0);
        m.raw_sigma_y = Tensor::scalar(1.0);
    }
    return m;
}

namespace detail {

template <class Params>
void fill_params_from(Params& params, const Checkpoint& ckpt) {
    params.for_each_param([&](const std::string& name, Tensor& t) {
        const Tensor& src = ckpt.field(name);
        require(src.shape() == t.shape(), "checkpoint: shape mismatch for field '" + name + "'");
        t = src;
    });
}

template <class Params>
void collect_params_into(Params& params, Checkpoint& ckpt) {
    params.for_each_param(
        [&](const std::string& name, Tensor& t) { ckpt.fields.emplace_back(name, t); });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// FlexConv (one MAGNet + mask) checkpoints, arch = "flexconv".
// ---------------------------------------------------------------------------

inline Checkpoint make_flexconv_checkpoint(MagnetParams& magnet, GaussianMaskParams& mask,
                                           std::size_t k, std::uint64_t seed) {
    Checkpoint ckpt;
    ckpt.meta["arch"] = "flexconv";
    ckpt.meta["dims"] = std::to_string(magnet.dims);
    ckpt.meta["layers"] = std::to_string(magnet.layers());
    ckpt.meta["n_hidden"] = std::to_string(magnet.n_hidden);
    ckpt.meta["n_in"] = std::to_string(magnet.n_in);
    ckpt.meta["n_out"] = std::to_string(magnet.n_out);
    ckpt.meta["isotropic"] = magnet.gabor.empty() || !magnet.gabor[0].isotropic ? "0" : "1";
    ckpt.meta["k"] = std::to_string(k);
    ckpt.meta["seed"] = std::to_string(seed);
    ckpt.meta["gamma_convention"] = kGammaConventionTag;
    detail::collect_params_into(magnet, ckpt);
    mask.for_each_param(
        [&](const std::string& name, Tensor& t) { ckpt.fields.emplace_back(name, t); });
    return ckpt;
}

struct FlexConvCheckpoint {
    MagnetParams magnet;
    GaussianMaskParams mask;
    std::size_t k = 0;
    std::uint64_t seed = 0;
};

inline FlexConvCheckpoint read_flexconv_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.meta_at("arch") == "flexconv", "checkpoint: arch is not flexconv");
    FlexConvCheckpoint out;
    out.k = ckpt.meta_count("k");
    out.seed = ckpt.meta_count("seed");
    out.magnet = empty_magnet(ckpt.meta_count("layers"), ckpt.meta_count("n_hidden"),
                              ckpt.meta_count("n_in"), ckpt.meta_count("n_out"),
                              ckpt.meta_count("dims"), ckpt.meta_at("isotropic") == "1");
    detail::fill_params_from(out.magnet, ckpt);
    out.mask = empty_mask(ckpt.meta_count("dims"));
    out.mask.for_each_param([&](const std::string& name, Tensor& t) {
        const Tensor& src = ckpt.field(name);
        t = src;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Bare generator checkpoints (no mask): arch = "magnet" or "siren".
// ---------------------------------------------------------------------------

inline Checkpoint make_magnet_checkpoint(MagnetParams& magnet, std::size_t k,
                                         std::uint64_t seed) {
    Checkpoint ckpt;
    ckpt.meta["arch"] = "magnet";
    ckpt.meta["dims"] = std::to_string(magnet.dims);
    ckpt.meta["layers"] = std::to_string(magnet.layers());
    ckpt.meta["n_hidden"] = std::to_string(magnet.n_hidden);
    ckpt.meta["n_in"] = std::to_string(magnet.n_in);
    ckpt.meta["n_out"] = std::to_string(magnet.n_out);
    ckpt.meta["isotropic"] = magnet.gabor.empty() || !magnet.gabor[0].isotropic ? "0" : "1";
    ckpt.meta["k"] = std::to_string(k);
    ckpt.meta["seed"] = std::to_string(seed);
    ckpt.meta["gamma_convention"] = kGammaConventionTag;
    detail::collect_params_into(magnet, ckpt);
    return ckpt;
}

inline MagnetParams read_magnet_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.meta_at("arch") == "magnet", "checkpoint: arch is not magnet");
    MagnetParams p = empty_magnet(ckpt.meta_count("layers"), ckpt.meta_count("n_hidden"),
                                  ckpt.meta_count("n_in"), ckpt.meta_count("n_out"),
                                  ckpt.meta_count("dims"), ckpt.meta_at("isotropic") == "1");
    detail::fill_params_from(p, ckpt);
    return p;
}

inline Checkpoint make_siren_checkpoint(SirenParams& siren, std::size_t k, std::uint64_t seed) {
    Checkpoint ckpt;
    ckpt.meta["arch"] = "siren";
    ckpt.meta["dims"] = std::to_string(siren.dims);
    ckpt.meta["layers"] = std::to_string(siren.layers());
    ckpt.meta["hidden"] = std::to_string(siren.hidden);
    ckpt.meta["n_in"] = std::to_string(siren.n_in);
    ckpt.meta["n_out"] = std::to_string(siren.n_out);
    ckpt.meta["omega0"] = format_double(siren.omega0);
    ckpt.meta["k"] = std::to_string(k);
    ckpt.meta["seed"] = std::to_string(seed);
    detail::collect_params_into(siren, ckpt);
    return ckpt;
}

inline SirenParams read_siren_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.meta_at("arch") == "siren", "checkpoint: arch is not siren");
    SirenParams p;
    p.dims = ckpt.meta_count("dims");
    p.hidden = ckpt.meta_count("hidden");
    p.n_in = ckpt.meta_count("n_in");
    p.n_out = ckpt.meta_count("n_out");
    p.omega0 = std::stod(ckpt.meta_at("omega0"));
    const std::size_t layers = ckpt.meta_count("layers");
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t fan_in = l == 0 ? p.dims : p.hidden;
        p.w.push_back(Tensor({p.hidden, fan_in}));
        p.b.push_back(Tensor({p.hidden}));
    }
    p.out_w = Tensor({p.n_out * p.n_in, p.hidden});
    p.out_b = Tensor({p.n_out * p.n_in});
    detail::fill_params_from(p, ckpt);
    return p;
}

// ---------------------------------------------------------------------------
// FlexNet checkpoints, arch = "flexnet", with batch-norm running statistics
// and optionally the optimizer moments.
// ---------------------------------------------------------------------------

inline Checkpoint make_flexnet_checkpoint(FlexNetParams& net, std::size_t magnet_layers,
                                          std::size_t magnet_hidden, std::uint64_t seed,
                                          const AdamOptimizer* adam = nullptr) {
    Checkpoint ckpt;
    ckpt.meta["arch"] = "flexnet";
    ckpt.meta["blocks"] = std::to_string(net.blocks.size());
    ckpt.meta["base_width"] = std::to_string(net.base_width);
    ckpt.meta["classes"] = std::to_string(net.n_classes);
    ckpt.meta["in_channels"] = std::to_string(net.in_channels);
    ckpt.meta["k"] = std::to_string(net.kernel_resolution);
    ckpt.meta["magnet_layers"] = std::to_string(magnet_layers);
    ckpt.meta["magnet_hidden"] = std::to_string(magnet_hidden);
    ckpt.meta["dropout"] = format_double(net.blocks.empty() ? 0.2 : net.blocks[0].dropout);
    ckpt.meta["seed"] = std::to_string(seed);
    ckpt.meta["gamma_convention"] = kGammaConventionTag;
    net.for_each_param(
        [&](const std::string& name, Tensor& t) { ckpt.fields.emplace_back(name, t); });
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        ckpt.fields.emplace_back(prefix + "bn1.running_mean", net.blocks[b].bn1_state.running_mean);
        ckpt.fields.emplace_back(prefix + "bn1.running_var", net.blocks[b].bn1_state.running_var);
        ckpt.fields.emplace_back(prefix + "bn2.running_mean", net.blocks[b].bn2_state.running_mean);
        ckpt.fields.emplace_back(prefix + "bn2.running_var", net.blocks[b].bn2_state.running_var);
    }
    if (adam) {
        ckpt.meta["adam_step"] = std::to_string(adam->step_count());
        for (const auto& [name, m] : adam->moments()) {
            ckpt.fields.emplace_back("adam.m." + name, m.m);
            ckpt.fields.emplace_back("adam.v." + name, m.v);
        }
    }
    return ckpt;
}

struct FlexNetCheckpoint {
    FlexNetParams net;
    std::size_t magnet_layers = 0;
    std::size_t magnet_hidden = 0;
    std::uint64_t seed = 0;
    std::map<std::string, AdamMoments> adam_moments;
    std::size_t adam_step = 0;
};

inline FlexNetCheckpoint read_flexnet_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.meta_at("arch") == "flexnet", "checkpoint: arch is not flexnet");
    FlexNetCheckpoint out;
    out.magnet_layers = ckpt.meta_count("magnet_layers");
    out.magnet_hidden = ckpt.meta_count("magnet_hidden");
    out.seed = ckpt.meta_count("seed");
    RngStream scratch(0);
    out.net = make_flexnet(ckpt.meta_count("blocks"), ckpt.meta_count("base_width"),
                           ckpt.meta_count("classes"), ckpt.meta_count("in_channels"),
                           ckpt.meta_count("k"), out.magnet_layers, out.magnet_hidden,
                           InitConfig{}, scratch,
                           std::stod(ckpt.meta_at("dropout")));
    detail::fill_params_from(out.net, ckpt);
    for (std::size_t b = 0; b < out.net.blocks.size(); ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        out.net.blocks[b].bn1_state.running_mean = ckpt.field(prefix + "bn1.running_mean");
        out.net.blocks[b].bn1_state.running_var = ckpt.field(prefix + "bn1.running_var");
        out.net.blocks[b].bn2_state.running_mean = ckpt.field(prefix + "bn2.running_mean");
        out.net.blocks[b].bn2_state.running_var = ckpt.field(prefix + "bn2.running_var");
    }
    if (ckpt.meta.count("adam_step")) {
        out.adam_step = ckpt.meta_count("adam_step");
        for (const auto& [name, tensor] : ckpt.fields) {
            if (name.rfind("adam.m.", 0) == 0) out.adam_moments[name.substr(7)].m = tensor;
            if (name.rfind("adam.v.", 0) == 0) out.adam_moments[name.substr(7)].v = tensor;
        }
    }
    return out;
}

}  // namespace flexkernel
