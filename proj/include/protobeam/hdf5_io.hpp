#pragma once

#include <hdf5.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "protobeam/dataset.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/iq_block.hpp"

namespace protobeam {

// On-disk layout: one group per beam ("beam_00" .. "beam_23"), one dataset
// per receiver gain inside each group ("gain_<id>") of shape N x 2048 x 2
// (or N x 2 x 2048 when iq_dim_last is false). The antenna identifier and
// nominal SNR live in root attributes. All names are remappable so files
// produced by other tooling can be adapted with a config change.
struct Hdf5Layout {
    std::string beam_group_prefix = "beam_";
    std::string gain_dataset_prefix = "gain_";
    std::string antenna_attribute = "antenna";
    std::string snr_attribute = "snr_db";
    bool iq_dim_last = true;
};

namespace hdf5_detail {

inline void silence_hdf5_errors() {
    static const bool done = [] {
        H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
        return true;
    }();
    (void)done;
}

// Scoped hid_t. HDF5 ids are reference counted; each kind has its own closer.
class Handle {
public:
    using Closer = herr_t (*)(hid_t);
    Handle(hid_t id, Closer closer) : id_(id), closer_(closer) {}
    ~Handle() {
        if (id_ >= 0)
            closer_(id_);
    }
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    hid_t get() const { return id_; }
    bool valid() const { return id_ >= 0; }

private:
    hid_t id_;
    Closer closer_;
};

inline std::string beam_group_name(const Hdf5Layout& layout, int beam) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d", beam);
    return layout.beam_group_prefix + buf;
}

inline void write_string_attribute(hid_t loc, const std::string& name, const std::string& value) {
    Handle space(H5Screate(H5S_SCALAR), H5Sclose);
    Handle type(H5Tcopy(H5T_C_S1), H5Tclose);
    H5Tset_size(type.get(), value.size() + 1);
    Handle attr(H5Acreate2(loc, name.c_str(), type.get(), space.get(), H5P_DEFAULT, H5P_DEFAULT),
                H5Aclose);
    if (!attr.valid() || H5Awrite(attr.get(), type.get(), value.c_str()) < 0)
        throw IoError("hdf5: failed to write attribute '" + name + "'");
}

inline void write_double_attribute(hid_t loc, const std::string& name, double value) {
    Handle space(H5Screate(H5S_SCALAR), H5Sclose);
    Handle attr(H5Acreate2(loc, name.c_str(), H5T_IEEE_F64LE, space.get(), H5P_DEFAULT, H5P_DEFAULT),
                H5Aclose);
    if (!attr.valid() || H5Awrite(attr.get(), H5T_NATIVE_DOUBLE, &value) < 0)
        throw IoError("hdf5: failed to write attribute '" + name + "'");
}

inline bool read_string_attribute(hid_t loc, const std::string& name, std::string& out) {
    if (H5Aexists(loc, name.c_str()) <= 0)
        return false;
    Handle attr(H5Aopen(loc, name.c_str(), H5P_DEFAULT), H5Aclose);
    Handle type(H5Aget_type(attr.get()), H5Tclose);
    const std::size_t size = H5Tget_size(type.get());
    std::vector<char> buf(size + 1, '\0');
    if (H5Aread(attr.get(), type.get(), buf.data()) < 0)
        return false;
    out.assign(buf.data());
    return true;
}

inline bool read_double_attribute(hid_t loc, const std::string& name, double& out) {
    if (H5Aexists(loc, name.c_str()) <= 0)
        return false;
    Handle attr(H5Aopen(loc, name.c_str(), H5P_DEFAULT), H5Aclose);
    return H5Aread(attr.get(), H5T_NATIVE_DOUBLE, &out) >= 0;
}

} // namespace hdf5_detail

// Writes one file holding every handle in `parts` (one dataset per gain
// setting). All handles must belong to the same antenna.
inline void write_deepbeam_hdf5(const std::string& path,
                                const std::vector<const DatasetHandle*>& parts,
                                const Hdf5Layout& layout = {}) {
    using namespace hdf5_detail;
    silence_hdf5_errors();
    if (parts.empty())
        throw ArgumentError("write_deepbeam_hdf5: no handles given");
    const std::string antenna = parts.front()->tag.antenna_id;
    for (std::size_t a = 0; a < parts.size(); ++a) {
        if (parts[a]->tag.antenna_id != antenna)
            throw ArgumentError("write_deepbeam_hdf5: handles span multiple antennas");
        for (std::size_t b = a + 1; b < parts.size(); ++b)
            if (parts[a]->tag.gain_setting == parts[b]->tag.gain_setting)
                throw ArgumentError("write_deepbeam_hdf5: duplicate gain setting '" +
                                    parts[a]->tag.gain_setting + "'");
    }

    Handle file(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose);
    if (!file.valid())
        throw IoError("write_deepbeam_hdf5: cannot create '" + path + "'");
    write_string_attribute(file.get(), layout.antenna_attribute, antenna);
    write_double_attribute(file.get(), layout.snr_attribute, parts.front()->tag.snr_db);

    for (int beam = 0; beam < kNumBeams; ++beam) {
        bool any = false;
        for (const DatasetHandle* h : parts)
            any = any || !h->by_beam[static_cast<std::size_t>(beam)].empty();
        if (!any)
            continue;
        const std::string gname = beam_group_name(layout, beam);
        Handle group(H5Gcreate2(file.get(), gname.c_str(), H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT),
                     H5Gclose);
        if (!group.valid())
            throw IoError("write_deepbeam_hdf5: cannot create group '" + gname + "'");

        for (const DatasetHandle* h : parts) {
            const auto& idx = h->by_beam[static_cast<std::size_t>(beam)];
            if (idx.empty())
                continue;
            const hsize_t n = idx.size();
            hsize_t dims[3];
            dims[0] = n;
            dims[1] = layout.iq_dim_last ? kBlockSamples : kBlockChannels;
            dims[2] = layout.iq_dim_last ? kBlockChannels : kBlockSamples;
            std::vector<double> buf(n * kBlockChannels * kBlockSamples);
            for (hsize_t r = 0; r < n; ++r) {
                const IQBlock& blk = h->blocks[static_cast<std::size_t>(idx[r])].block;
                double* dst = buf.data() + r * kBlockChannels * kBlockSamples;
                if (layout.iq_dim_last) {
                    for (int t = 0; t < kBlockSamples; ++t)
                        for (int c = 0; c < kBlockChannels; ++c)
                            dst[static_cast<std::size_t>(t) * kBlockChannels + c] = blk.at(c, t);
                } else {
                    std::copy(blk.data.begin(), blk.data.end(), dst);
                }
            }
            Handle space(H5Screate_simple(3, dims, nullptr), H5Sclose);
            const std::string dname = layout.gain_dataset_prefix + h->tag.gain_setting;
            Handle dset(H5Dcreate2(group.get(), dname.c_str(), H5T_IEEE_F64LE, space.get(),
                                   H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT),
                        H5Dclose);
            if (!dset.valid() ||
                H5Dwrite(dset.get(), H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT,
                         buf.data()) < 0)
                throw IoError("write_deepbeam_hdf5: failed writing '" + gname + "/" + dname + "'");
        }
    }
}

inline void write_deepbeam_hdf5(const std::string& path, const DatasetHandle& handle,
                                const Hdf5Layout& layout = {}) {
    write_deepbeam_hdf5(path, std::vector<const DatasetHandle*>{&handle}, layout);
}

// Loads the requested gain of one file. Blocks are truncated to
// max_blocks_per_beam per beam in file order; pass 0 for an empty handle.
inline DatasetHandle load_deepbeam_hdf5(const std::string& path, const std::string& antenna_pair,
                                        const std::string& gain, int max_blocks_per_beam,
                                        const Hdf5Layout& layout = {}) {
    using namespace hdf5_detail;
    silence_hdf5_errors();
    if (max_blocks_per_beam < 0)
        throw ArgumentError("load_deepbeam_hdf5: max_blocks_per_beam must be >= 0");
    if (!std::filesystem::exists(path))
        throw IoError("load_deepbeam_hdf5: no such file '" + path + "'");
    Handle file(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
    if (!file.valid())
        throw IoError("load_deepbeam_hdf5: cannot open '" + path + "' as HDF5");

    DatasetHandle out;
    out.source = DataSource::kHdf5;
    out.tag.antenna_id = antenna_pair;
    out.tag.gain_setting = gain;

    std::string file_antenna;
    if (read_string_attribute(file.get(), layout.antenna_attribute, file_antenna) &&
        file_antenna != antenna_pair)
        throw FormatError("load_deepbeam_hdf5: file is tagged antenna '" + file_antenna +
                          "', requested '" + antenna_pair + "'");
    double snr = 0.0;
    if (read_double_attribute(file.get(), layout.snr_attribute, snr)) {
        if (snr < kSnrDbMin || snr > kSnrDbMax)
            throw FormatError("load_deepbeam_hdf5: snr attribute " + std::to_string(snr) +
                              " outside [" + std::to_string(kSnrDbMin) + ", " +
                              std::to_string(kSnrDbMax) + "]");
        out.tag.snr_db = snr;
    }

    if (max_blocks_per_beam == 0)
        return out;

    H5G_info_t ginfo;
    if (H5Gget_info(file.get(), &ginfo) < 0)
        throw IoError("load_deepbeam_hdf5: cannot enumerate groups in '" + path + "'");

    for (hsize_t link = 0; link < ginfo.nlinks; ++link) {
        const ssize_t len = H5Lget_name_by_idx(file.get(), ".", H5_INDEX_NAME, H5_ITER_INC, link,
                                               nullptr, 0, H5P_DEFAULT);
        std::vector<char> namebuf(static_cast<std::size_t>(len) + 1, '\0');
        H5Lget_name_by_idx(file.get(), ".", H5_INDEX_NAME, H5_ITER_INC, link, namebuf.data(),
                           namebuf.size(), H5P_DEFAULT);
        const std::string gname(namebuf.data());

        if (gname.rfind(layout.beam_group_prefix, 0) != 0)
            throw FormatError("load_deepbeam_hdf5: unexpected entry '" + gname +
                              "' (beam groups must start with '" + layout.beam_group_prefix + "')");
        const std::string suffix = gname.substr(layout.beam_group_prefix.size());
        int beam = -1;
        try {
            std::size_t pos = 0;
            beam = std::stoi(suffix, &pos);
            if (pos != suffix.size())
                beam = -1;
        } catch (const std::exception&) {
            beam = -1;
        }
        if (beam < 0 || beam >= kNumBeams)
            throw FormatError("load_deepbeam_hdf5: unknown beam index in group '" + gname + "'");

        Handle group(H5Gopen2(file.get(), gname.c_str(), H5P_DEFAULT), H5Gclose);
        if (!group.valid())
            throw IoError("load_deepbeam_hdf5: cannot open group '" + gname + "'");
        const std::string dname = layout.gain_dataset_prefix + gain;
        if (H5Lexists(group.get(), dname.c_str(), H5P_DEFAULT) <= 0)
            throw FormatError("load_deepbeam_hdf5: missing dataset '" + gname + "/" + dname + "'");
        Handle dset(H5Dopen2(group.get(), dname.c_str(), H5P_DEFAULT), H5Dclose);
        Handle space(H5Dget_space(dset.get()), H5Sclose);
        if (H5Sget_simple_extent_ndims(space.get()) != 3)
            throw FormatError("load_deepbeam_hdf5: dataset '" + gname + "/" + dname +
                              "' is not 3-dimensional");
        hsize_t dims[3];
        H5Sget_simple_extent_dims(space.get(), dims, nullptr);
        const hsize_t want_mid = layout.iq_dim_last ? kBlockSamples : kBlockChannels;
        const hsize_t want_last = layout.iq_dim_last ? kBlockChannels : kBlockSamples;
        if (dims[1] != want_mid || dims[2] != want_last) {
            const hsize_t observed_len = layout.iq_dim_last ? dims[1] : dims[2];
            throw FormatError("load_deepbeam_hdf5: dataset '" + gname + "/" + dname +
                              "' has block length " + std::to_string(observed_len) +
                              ", expected " + std::to_string(kBlockSamples));
        }

        const hsize_t n_take = std::min<hsize_t>(dims[0], static_cast<hsize_t>(max_blocks_per_beam));
        if (n_take == 0)
            continue;
        hsize_t offset[3] = {0, 0, 0};
        hsize_t count[3] = {n_take, dims[1], dims[2]};
        H5Sselect_hyperslab(space.get(), H5S_SELECT_SET, offset, nullptr, count, nullptr);
        Handle memspace(H5Screate_simple(3, count, nullptr), H5Sclose);
        std::vector<double> buf(n_take * kBlockChannels * kBlockSamples);
        if (H5Dread(dset.get(), H5T_NATIVE_DOUBLE, memspace.get(), space.get(), H5P_DEFAULT,
                    buf.data()) < 0)
            throw IoError("load_deepbeam_hdf5: read failed for '" + gname + "/" + dname + "'");

        for (hsize_t r = 0; r < n_take; ++r) {
            LabeledBlock lb;
            lb.beam = beam;
            lb.domain = out.tag;
            const double* src = buf.data() + r * kBlockChannels * kBlockSamples;
            if (layout.iq_dim_last) {
                for (int t = 0; t < kBlockSamples; ++t)
                    for (int c = 0; c < kBlockChannels; ++c)
                        lb.block.at(c, t) = src[static_cast<std::size_t>(t) * kBlockChannels + c];
            } else {
                std::copy(src, src + kBlockChannels * kBlockSamples, lb.block.data.begin());
            }
            out.blocks.push_back(std::move(lb));
        }
    }
    out.rebuild_index();
    return out;
}

} // namespace protobeam
