#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "protobeam/ablation.hpp"
#include "protobeam/csv.hpp"
#include "protobeam/dataset.hpp"
#include "protobeam/encoder.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/hdf5_io.hpp"
#include "protobeam/protonet.hpp"
#include "protobeam/synth.hpp"

namespace protobeam {

using Json = nlohmann::json;

namespace config_detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
    if (!j.is_object())
        throw ConfigError("config: '" + ctx + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("config: unknown key '" + it.key() + "' in " + ctx);
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
        }
    }
}

} // namespace config_detail

// --- section (de)serialization -------------------------------------------

inline Json to_json(const SyntheticDomainConfig& d) {
    return Json{{"name", d.name},
                {"iq_gain_imbalance_db", d.iq_gain_imbalance_db},
                {"iq_phase_imbalance_deg", d.iq_phase_imbalance_deg},
                {"cfo_normalized", d.cfo_normalized},
                {"phase_noise_std", d.phase_noise_std},
                {"gain_db", d.gain_db},
                {"seed_offset", d.seed_offset}};
}

inline SyntheticDomainConfig domain_from_json(const Json& j, const std::string& ctx) {
    config_detail::check_keys(j,
                              {"name", "iq_gain_imbalance_db", "iq_phase_imbalance_deg",
                               "cfo_normalized", "phase_noise_std", "gain_db", "seed_offset"},
                              ctx);
    SyntheticDomainConfig d;
    config_detail::read(j, "name", d.name);
    config_detail::read(j, "iq_gain_imbalance_db", d.iq_gain_imbalance_db);
    config_detail::read(j, "iq_phase_imbalance_deg", d.iq_phase_imbalance_deg);
    config_detail::read(j, "cfo_normalized", d.cfo_normalized);
    config_detail::read(j, "phase_noise_std", d.phase_noise_std);
    config_detail::read(j, "gain_db", d.gain_db);
    config_detail::read(j, "seed_offset", d.seed_offset);
    return d;
}

inline Json to_json(const AugmentConfig& a) {
    return Json{{"enabled", a.enabled},
                {"phase_lo_rad", a.phase_lo_rad},
                {"phase_hi_rad", a.phase_hi_rad},
                {"scale_lo", a.scale_lo},
                {"scale_hi", a.scale_hi}};
}

inline AugmentConfig augment_from_json(const Json& j, const std::string& ctx) {
    config_detail::check_keys(
        j, {"enabled", "phase_lo_rad", "phase_hi_rad", "scale_lo", "scale_hi"}, ctx);
    AugmentConfig a;
    config_detail::read(j, "enabled", a.enabled);
    config_detail::read(j, "phase_lo_rad", a.phase_lo_rad);
    config_detail::read(j, "phase_hi_rad", a.phase_hi_rad);
    config_detail::read(j, "scale_lo", a.scale_lo);
    config_detail::read(j, "scale_hi", a.scale_hi);
    return a;
}

inline Json to_json(const TrainConfig& t) {
    return Json{{"n_way", t.n_way},
                {"n_shot", t.n_shot},
                {"n_query", t.n_query},
                {"learning_rate", t.learning_rate},
                {"lr_decay_factor", t.lr_decay_factor},
                {"patience_episodes", t.patience_episodes},
                {"max_episodes", t.max_episodes},
                {"val_interval", t.val_interval},
                {"val_episodes", t.val_episodes},
                {"weight_decay", t.weight_decay},
                {"seed", t.seed},
                {"augment", to_json(t.augment)},
                {"prototype_normalization", t.prototype_normalization},
                {"data_normalization", t.data_normalization}};
}

inline TrainConfig train_from_json(const Json& j, const std::string& ctx) {
    config_detail::check_keys(j,
                              {"n_way", "n_shot", "n_query", "learning_rate", "lr_decay_factor",
                               "patience_episodes", "max_episodes", "val_interval", "val_episodes",
                               "weight_decay", "seed", "augment", "prototype_normalization",
                               "data_normalization"},
                              ctx);
    TrainConfig t;
    config_detail::read(j, "n_way", t.n_way);
    config_detail::read(j, "n_shot", t.n_shot);
    config_detail::read(j, "n_query", t.n_query);
    config_detail::read(j, "learning_rate", t.learning_rate);
    config_detail::read(j, "lr_decay_factor", t.lr_decay_factor);
    config_detail::read(j, "patience_episodes", t.patience_episodes);
    config_detail::read(j, "max_episodes", t.max_episodes);
    config_detail::read(j, "val_interval", t.val_interval);
    config_detail::read(j, "val_episodes", t.val_episodes);
    config_detail::read(j, "weight_decay", t.weight_decay);
    config_detail::read(j, "seed", t.seed);
    if (j.contains("augment"))
        t.augment = augment_from_json(j.at("augment"), ctx + ".augment");
    config_detail::read(j, "prototype_normalization", t.prototype_normalization);
    config_detail::read(j, "data_normalization", t.data_normalization);
    return t;
}

inline Json to_json(const EncoderConfig& e) {
    return Json{{"num_dense_blocks", e.num_dense_blocks},
                {"layers_per_block", e.layers_per_block},
                {"growth_rate", e.growth_rate},
                {"stem_channels", e.stem_channels},
                {"transition_compression", e.transition_compression},
                {"embedding_dim", e.embedding_dim},
                {"input_length", e.input_length},
                {"small_mode", e.small_mode}};
}

inline EncoderConfig encoder_from_json(const Json& j, const std::string& ctx) {
    config_detail::check_keys(j,
                              {"num_dense_blocks", "layers_per_block", "growth_rate",
                               "stem_channels", "transition_compression", "embedding_dim",
                               "input_length", "small_mode"},
                              ctx);
    EncoderConfig e;
    config_detail::read(j, "num_dense_blocks", e.num_dense_blocks);
    config_detail::read(j, "layers_per_block", e.layers_per_block);
    config_detail::read(j, "growth_rate", e.growth_rate);
    config_detail::read(j, "stem_channels", e.stem_channels);
    config_detail::read(j, "transition_compression", e.transition_compression);
    config_detail::read(j, "embedding_dim", e.embedding_dim);
    config_detail::read(j, "input_length", e.input_length);
    config_detail::read(j, "small_mode", e.small_mode);
    return e;
}

inline Json to_json(const Hdf5Layout& l) {
    return Json{{"beam_group_prefix", l.beam_group_prefix},
                {"gain_dataset_prefix", l.gain_dataset_prefix},
                {"antenna_attribute", l.antenna_attribute},
                {"snr_attribute", l.snr_attribute},
                {"iq_dim_last", l.iq_dim_last}};
}

inline Hdf5Layout layout_from_json(const Json& j, const std::string& ctx) {
    config_detail::check_keys(j,
                              {"beam_group_prefix", "gain_dataset_prefix", "antenna_attribute",
                               "snr_attribute", "iq_dim_last"},
                              ctx);
    Hdf5Layout l;
    config_detail::read(j, "beam_group_prefix", l.beam_group_prefix);
    config_detail::read(j, "gain_dataset_prefix", l.gain_dataset_prefix);
    config_detail::read(j, "antenna_attribute", l.antenna_attribute);
    config_detail::read(j, "snr_attribute", l.snr_attribute);
    config_detail::read(j, "iq_dim_last", l.iq_dim_last);
    return l;
}

// --- run configuration -----------------------------------------------------

struct DataConfig {
    std::string source = "synthetic"; // or "hdf5"
    int blocks_per_beam = 60;
    double snr_db = 15.0;
    double query_fraction = 0.25;
    double val_fraction = 0.15;
    // hdf5 source: one file per domain.
    struct Hdf5File {
        std::string path;
        std::string antenna;
        std::string gain = "g0";
    };
    std::vector<Hdf5File> hdf5_files;
    int max_blocks_per_beam = std::numeric_limits<int>::max();
    Hdf5Layout layout;
};

struct EvalSection {
    int k = 16;
    int tolerance = 1;
    std::vector<int> ks = {1, 2, 4, 8, 16};
    int repeats = 5;
    int pca_query_cap = 2000;
};

struct AblationSection {
    std::vector<int> ks = {2, 32};
    int subset_blocks = 500;
    int max_episodes = 0; // 0 = inherit from the train section
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string train_domain = "tx0";
    std::vector<SyntheticDomainConfig> domains = default_synthetic_domains();
    DataConfig data;
    TrainConfig train;
    EncoderConfig encoder;
    EvalSection eval;
    AblationSection ablation;
};

inline Json to_json(const RunConfig& c) {
    Json domains = Json::array();
    for (const auto& d : c.domains)
        domains.push_back(to_json(d));
    Json hdf5_files = Json::array();
    for (const auto& f : c.data.hdf5_files)
        hdf5_files.push_back(Json{{"path", f.path}, {"antenna", f.antenna}, {"gain", f.gain}});
    return Json{
        {"seed", c.seed},
        {"out_dir", c.out_dir},
        {"train_domain", c.train_domain},
        {"domains", domains},
        {"data",
         Json{{"source", c.data.source},
              {"blocks_per_beam", c.data.blocks_per_beam},
              {"snr_db", c.data.snr_db},
              {"query_fraction", c.data.query_fraction},
              {"val_fraction", c.data.val_fraction},
              {"hdf5_files", hdf5_files},
              {"max_blocks_per_beam", c.data.max_blocks_per_beam},
              {"hdf5_layout", to_json(c.data.layout)}}},
        {"train", to_json(c.train)},
        {"encoder", to_json(c.encoder)},
        {"eval",
         Json{{"k", c.eval.k},
              {"tolerance", c.eval.tolerance},
              {"ks", c.eval.ks},
              {"repeats", c.eval.repeats},
              {"pca_query_cap", c.eval.pca_query_cap}}},
        {"ablation",
         Json{{"ks", c.ablation.ks},
              {"subset_blocks", c.ablation.subset_blocks},
              {"max_episodes", c.ablation.max_episodes}}}};
}

inline RunConfig run_config_from_json(const Json& j) {
    using config_detail::check_keys;
    using config_detail::read;
    check_keys(j,
               {"seed", "out_dir", "train_domain", "domains", "data", "train", "encoder", "eval",
                "ablation"},
               "(root)");
    RunConfig c;
    read(j, "seed", c.seed);
    read(j, "out_dir", c.out_dir);
    read(j, "train_domain", c.train_domain);
    if (j.contains("domains")) {
        c.domains.clear();
        int i = 0;
        for (const auto& dj : j.at("domains"))
            c.domains.push_back(domain_from_json(dj, "domains[" + std::to_string(i++) + "]"));
    }
    if (j.contains("data")) {
        const Json& d = j.at("data");
        check_keys(d,
                   {"source", "blocks_per_beam", "snr_db", "query_fraction", "val_fraction",
                    "hdf5_files", "max_blocks_per_beam", "hdf5_layout"},
                   "data");
        read(d, "source", c.data.source);
        if (c.data.source != "synthetic" && c.data.source != "hdf5")
            throw ConfigError("config: data.source must be 'synthetic' or 'hdf5'");
        read(d, "blocks_per_beam", c.data.blocks_per_beam);
        read(d, "snr_db", c.data.snr_db);
        read(d, "query_fraction", c.data.query_fraction);
        read(d, "val_fraction", c.data.val_fraction);
        read(d, "max_blocks_per_beam", c.data.max_blocks_per_beam);
        if (d.contains("hdf5_layout"))
            c.data.layout = layout_from_json(d.at("hdf5_layout"), "data.hdf5_layout");
        if (d.contains("hdf5_files")) {
            int i = 0;
            for (const auto& fj : d.at("hdf5_files")) {
                check_keys(fj, {"path", "antenna", "gain"},
                           "data.hdf5_files[" + std::to_string(i++) + "]");
                DataConfig::Hdf5File f;
                read(fj, "path", f.path);
                read(fj, "antenna", f.antenna);
                read(fj, "gain", f.gain);
                c.data.hdf5_files.push_back(std::move(f));
            }
        }
    }
    if (j.contains("train"))
        c.train = train_from_json(j.at("train"), "train");
    if (j.contains("encoder"))
        c.encoder = encoder_from_json(j.at("encoder"), "encoder");
    if (j.contains("eval")) {
        const Json& e = j.at("eval");
        check_keys(e, {"k", "tolerance", "ks", "repeats", "pca_query_cap"}, "eval");
        read(e, "k", c.eval.k);
        read(e, "tolerance", c.eval.tolerance);
        read(e, "ks", c.eval.ks);
        read(e, "repeats", c.eval.repeats);
        read(e, "pca_query_cap", c.eval.pca_query_cap);
    }
    if (j.contains("ablation")) {
        const Json& a = j.at("ablation");
        check_keys(a, {"ks", "subset_blocks", "max_episodes"}, "ablation");
        read(a, "ks", c.ablation.ks);
        read(a, "subset_blocks", c.ablation.subset_blocks);
        read(a, "max_episodes", c.ablation.max_episodes);
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw IoError("load_run_config: cannot open '" + path + "'");
    Json j;
    try {
        f >> j;
    } catch (const Json::exception& e) {
        throw ConfigError("load_run_config: parse error in '" + path + "': " + e.what());
    }
    return run_config_from_json(j);
}

// Every run writes its fully resolved configuration next to its outputs.
inline void write_resolved_config(const RunConfig& c, const std::string& path) {
    atomic_write_text(path, to_json(c).dump(2) + "\n");
}

} // namespace protobeam
