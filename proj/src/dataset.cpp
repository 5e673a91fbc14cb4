#include "iqabench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iqabench/error.hpp"

using json = nlohmann::ordered_json;

namespace iqa {

std::string to_string(Role r) {
    switch (r) {
        case Role::Reference: return "reference";
        case Role::Distorted: return "distorted";
        case Role::Standalone: return "standalone";
    }
    throw Error("bad role");
}

Role role_from_string(const std::string& s) {
    if (s == "reference") return Role::Reference;
    if (s == "distorted") return Role::Distorted;
    if (s == "standalone") return Role::Standalone;
    throw Error("unknown role: " + s);
}

std::string to_string(Scenario s) {
    return s == Scenario::FR ? "FR" : "NR";
}

Scenario scenario_from_string(const std::string& s) {
    if (s == "FR") return Scenario::FR;
    if (s == "NR") return Scenario::NR;
    throw Error("unknown scenario: " + s);
}

Manifest::Manifest(ManifestHeader header, std::vector<ImageRecord> records)
    : header_(header), records_(std::move(records)) {
    validate_and_index();
}

void Manifest::validate_and_index() {
    for (size_t i = 0; i < records_.size(); ++i) {
        const ImageRecord& r = records_[i];
        if (r.image_id.empty())
            throw Error("manifest: record " + std::to_string(i) + ": empty image_id");
        if (!std::isfinite(r.mos))
            throw Error("manifest: record '" + r.image_id + "': mos not finite");
        if (!(r.std >= 0.0))
            throw Error("manifest: record '" + r.image_id + "': std must be >= 0, got " +
                        std::to_string(r.std));
        if (!by_id_.emplace(r.image_id, i).second)
            throw Error("manifest: duplicate image_id '" + r.image_id + "'");
        if (r.role == Role::Reference) {
            if (r.content_group.empty())
                throw Error("manifest: reference '" + r.image_id + "' has empty content_group");
            if (!group_reference_.emplace(r.content_group, i).second)
                throw Error("manifest: group '" + r.content_group + "' has more than one reference");
        } else if (r.role == Role::Distorted) {
            if (r.content_group.empty())
                throw Error("manifest: distorted '" + r.image_id + "' has empty content_group");
            groups_[r.content_group].push_back(i);
        }
    }
    if (header_.scenario == Scenario::FR) {
        for (const auto& [gid, members] : groups_) {
            (void)members;
            if (!group_reference_.count(gid))
                throw Error("manifest: dangling content_group '" + gid + "' (no reference record)");
        }
    }
    for (auto& [gid, members] : groups_) {
        std::sort(members.begin(), members.end(), [this](size_t a, size_t b) {
            return records_[a].image_id < records_[b].image_id;
        });
    }
}

namespace {

ImageRecord record_from_json(const json& j, size_t line_no) {
    const char* required[] = {"image_id", "uri", "role", "content_group", "mos", "std", "dataset_tag"};
    for (const char* field : required) {
        if (!j.contains(field))
            throw Error("manifest line " + std::to_string(line_no) + ": missing field '" + field + "'");
    }
    ImageRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.uri = j.at("uri").get<std::string>();
    r.role = role_from_string(j.at("role").get<std::string>());
    r.content_group = j.at("content_group").get<std::string>();
    r.mos = j.at("mos").get<double>();
    r.std = j.at("std").get<double>();
    r.dataset_tag = j.at("dataset_tag").get<std::string>();
    if (j.contains("distortion_meta") && !j.at("distortion_meta").is_null())
        r.distortion_meta = j.at("distortion_meta").get<std::string>();
    return r;
}

json record_to_json(const ImageRecord& r) {
    json j;
    j["image_id"] = r.image_id;
    j["uri"] = r.uri;
    j["role"] = to_string(r.role);
    j["content_group"] = r.content_group;
    j["mos"] = r.mos;
    j["std"] = r.std;
    j["dataset_tag"] = r.dataset_tag;
    if (r.distortion_meta) j["distortion_meta"] = *r.distortion_meta;
    return j;
}

}  // namespace

Manifest Manifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("manifest: cannot open " + path);
    std::string line;
    size_t line_no = 0;
    ManifestHeader header;
    std::vector<ImageRecord> records;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!have_header) {
            if (!j.contains("scale_min") || !j.contains("scale_max") || !j.contains("scenario"))
                throw Error("manifest: first line must be the header {scale_min, scale_max, scenario}");
            header.scale_min = j.at("scale_min").get<double>();
            header.scale_max = j.at("scale_max").get<double>();
            header.scenario = scenario_from_string(j.at("scenario").get<std::string>());
            have_header = true;
            continue;
        }
        records.push_back(record_from_json(j, line_no));
    }
    if (!have_header) throw Error("manifest: empty file, header required: " + path);
    return Manifest(header, std::move(records));
}

std::string Manifest::to_jsonl() const {
    std::ostringstream out;
    json h;
    h["scale_min"] = header_.scale_min;
    h["scale_max"] = header_.scale_max;
    h["scenario"] = to_string(header_.scenario);
    out << h.dump() << "\n";
    for (const ImageRecord& r : records_) out << record_to_json(r).dump() << "\n";
    return out.str();
}

void Manifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("manifest: cannot write " + path);
    out << to_jsonl();
}

bool Manifest::contains(const std::string& image_id) const {
    return by_id_.count(image_id) > 0;
}

const ImageRecord& Manifest::record(const std::string& image_id) const {
    auto it = by_id_.find(image_id);
    if (it == by_id_.end()) throw Error("manifest: unknown image_id '" + image_id + "'");
    return records_[it->second];
}

std::vector<const ImageRecord*> Manifest::group_of(const std::string& image_id) const {
    const ImageRecord& r = record(image_id);
    if (r.role == Role::Standalone) return {&r};
    auto ref_it = group_reference_.find(r.content_group);
    if (ref_it == group_reference_.end())
        throw Error("manifest: group '" + r.content_group + "' has no reference");
    std::vector<const ImageRecord*> out;
    out.push_back(&records_[ref_it->second]);
    auto g = groups_.find(r.content_group);
    if (g != groups_.end())
        for (size_t idx : g->second) out.push_back(&records_[idx]);
    return out;
}

std::vector<std::string> Manifest::group_ids() const {
    std::vector<std::string> out;
    for (const auto& [gid, idx] : group_reference_) {
        (void)idx;
        out.push_back(gid);
    }
    return out;
}

const ImageRecord& Manifest::reference_of(const std::string& group_id) const {
    auto it = group_reference_.find(group_id);
    if (it == group_reference_.end())
        throw Error("manifest: unknown group '" + group_id + "'");
    return records_[it->second];
}

std::vector<const ImageRecord*> Manifest::distorted_of(const std::string& group_id) const {
    auto it = groups_.find(group_id);
    if (it == groups_.end()) return {};
    std::vector<const ImageRecord*> out;
    for (size_t idx : it->second) out.push_back(&records_[idx]);
    return out;
}

EmbeddingTable::EmbeddingTable(std::string encoder_tag, size_t dim)
    : encoder_tag_(std::move(encoder_tag)), dim_(dim) {
    if (dim_ == 0) throw Error("embeddings: dimension must be > 0");
}

void EmbeddingTable::insert(const std::string& image_id, std::vector<double> vec) {
    if (dim_ == 0) dim_ = vec.size();
    if (vec.empty() || vec.size() != dim_)
        throw Error("embeddings: row '" + image_id + "' has dimension " +
                    std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
    if (!vectors_.emplace(image_id, std::move(vec)).second)
        throw Error("embeddings: duplicate image_id '" + image_id + "'");
}

bool EmbeddingTable::contains(const std::string& image_id) const {
    return vectors_.count(image_id) > 0;
}

const std::vector<double>& EmbeddingTable::at(const std::string& image_id) const {
    auto it = vectors_.find(image_id);
    if (it == vectors_.end()) throw Error("embeddings: missing image_id '" + image_id + "'");
    return it->second;
}

EmbeddingTable EmbeddingTable::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("embeddings: cannot open " + path);
    EmbeddingTable table;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, cell;
        if (!std::getline(ss, id, ','))
            throw Error("embeddings line " + std::to_string(line_no) + ": missing image_id");
        std::vector<double> vec;
        while (std::getline(ss, cell, ',')) {
            try {
                vec.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw Error("embeddings line " + std::to_string(line_no) + ": bad value '" + cell + "'");
            }
        }
        table.insert(id, std::move(vec));
    }
    return table;
}

EmbeddingTable EmbeddingTable::load_raw(const std::string& sidecar_path) {
    std::ifstream sc(sidecar_path);
    if (!sc) throw Error("embeddings: cannot open sidecar " + sidecar_path);
    json j = json::parse(sc);
    const size_t dim = j.at("dim").get<size_t>();
    const auto ids = j.at("ids").get<std::vector<std::string>>();
    std::string blob_path = sidecar_path;
    const auto dot = blob_path.rfind(".json");
    if (dot != std::string::npos) blob_path = blob_path.substr(0, dot);
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw Error("embeddings: cannot open blob " + blob_path);
    EmbeddingTable table(j.value("encoder_tag", std::string{}), dim);
    std::vector<float> row(dim);
    for (const std::string& id : ids) {
        blob.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(float)));
        if (!blob) throw Error("embeddings: blob truncated at id '" + id + "'");
        std::vector<double> vec(row.begin(), row.end());
        table.insert(id, std::move(vec));
    }
    return table;
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
    if (path.size() > 5 && path.compare(path.size() - 5, 5, ".json") == 0)
        return load_raw(path);
    return load_csv(path);
}

ExpertScoreTable ExpertScoreTable::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("expert scores: cannot open " + path);
    ExpertScoreTable table;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, name, score;
        if (!std::getline(ss, id, ',') || !std::getline(ss, name, ',') || !std::getline(ss, score))
            throw Error("expert scores line " + std::to_string(line_no) + ": expected image_id,expert_name,raw_score");
        try {
            table.add(id, name, std::stod(score));
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw Error("expert scores line " + std::to_string(line_no) + ": bad score '" + score + "'");
        }
    }
    return table;
}

void ExpertScoreTable::add(const std::string& image_id, const std::string& expert_name, double raw_score) {
    if (!std::isfinite(raw_score))
        throw Error("expert scores: non-finite score for '" + image_id + "'");
    scores_[image_id].push_back({expert_name, raw_score});
}

const std::vector<ExpertScore>& ExpertScoreTable::scores_of(const std::string& image_id) const {
    auto it = scores_.find(image_id);
    if (it == scores_.end()) throw Error("expert scores: no scores for '" + image_id + "'");
    return it->second;
}

bool ExpertScoreTable::has_scores(const std::string& image_id) const {
    return scores_.count(image_id) > 0;
}

std::vector<std::string> ExpertScoreTable::expert_names() const {
    std::vector<std::string> names;
    for (const auto& [id, list] : scores_) {
        (void)id;
        for (const ExpertScore& s : list) names.push_back(s.expert_name);
    }
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    return names;
}

std::vector<std::string> ExpertScoreTable::image_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, list] : scores_) {
        (void)list;
        ids.push_back(id);
    }
    return ids;
}

void ExpertScoreTable::set_fused(const std::string& image_id, double value) {
    if (!std::isfinite(value))
        throw Error("expert scores: non-finite fused score for '" + image_id + "'");
    fused_[image_id] = value;
}

std::optional<double> ExpertScoreTable::fused(const std::string& image_id) const {
    auto it = fused_.find(image_id);
    if (it == fused_.end()) return std::nullopt;
    return it->second;
}

}  // namespace iqa
