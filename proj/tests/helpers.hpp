#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "iqabench/dataset.hpp"
#include "iqabench/rng.hpp"

namespace testutil {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

// Fresh directory under the build tree, wiped on construction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::path("test_tmp") / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// FR manifest: groups g00..g{N-1}, each with reference g##_ref and K distorted
// g##_d0..; mos defaults spread over [0,100].
inline iqa::Manifest make_fr_manifest(int n_groups, int k_distorted,
                                      std::uint64_t seed = 7, double scale_max = 100.0) {
    iqa::ManifestHeader header;
    header.scale_min = 0.0;
    header.scale_max = scale_max;
    header.scenario = iqa::Scenario::FR;
    iqa::Rng rng(seed);
    std::vector<iqa::ImageRecord> records;
    for (int g = 0; g < n_groups; ++g) {
        char gid[16];
        std::snprintf(gid, sizeof gid, "g%02d", g);
        iqa::ImageRecord ref;
        ref.image_id = std::string(gid) + "_ref";
        ref.uri = "img/" + ref.image_id + ".png";
        ref.role = iqa::Role::Reference;
        ref.content_group = gid;
        ref.mos = scale_max;
        ref.std = 0.0;
        ref.dataset_tag = "toy";
        records.push_back(ref);
        for (int k = 0; k < k_distorted; ++k) {
            iqa::ImageRecord rec;
            char did[24];
            std::snprintf(did, sizeof did, "%s_d%02d", gid, k);
            rec.image_id = did;
            rec.uri = "img/" + rec.image_id + ".png";
            rec.role = iqa::Role::Distorted;
            rec.content_group = gid;
            rec.mos = rng.uniform01() * scale_max;
            rec.std = rng.uniform01() * 10.0;
            rec.dataset_tag = "toy";
            records.push_back(rec);
        }
    }
    return iqa::Manifest(header, std::move(records));
}

// NR manifest: standalone images img000.. with mos spread over [0,100].
inline iqa::Manifest make_nr_manifest(int n, std::uint64_t seed = 7,
                                      bool distinct_mos = false) {
    iqa::ManifestHeader header;
    header.scenario = iqa::Scenario::NR;
    iqa::Rng rng(seed);
    std::vector<iqa::ImageRecord> records;
    for (int i = 0; i < n; ++i) {
        iqa::ImageRecord rec;
        char id[16];
        std::snprintf(id, sizeof id, "img%03d", i);
        rec.image_id = id;
        rec.uri = "img/" + rec.image_id + ".png";
        rec.role = iqa::Role::Standalone;
        rec.mos = distinct_mos ? (100.0 * (i + 0.5) / n) : rng.uniform01() * 100.0;
        rec.std = rng.uniform01() * 10.0;
        rec.dataset_tag = "toy";
        records.push_back(rec);
    }
    return iqa::Manifest(header, std::move(records));
}

}  // namespace testutil
