#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace iqa {

enum class Role { Reference, Distorted, Standalone };
enum class Scenario { FR, NR };

std::string to_string(Role r);
Role role_from_string(const std::string& s);
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct ImageRecord {
    std::string image_id;
    std::string uri;
    Role role = Role::Standalone;
    std::string content_group;  // empty for NR standalone
    double mos = 0.0;           // human score on the dataset's native scale
    double std = 0.0;           // inter-subject standard deviation, >= 0
    std::string dataset_tag;
    std::optional<std::string> distortion_meta;
};

struct ManifestHeader {
    double scale_min = 0.0;
    double scale_max = 100.0;
    Scenario scenario = Scenario::NR;
};

// A validated, immutable dataset manifest with content-group indexing.
class Manifest {
public:
    Manifest() = default;
    Manifest(ManifestHeader header, std::vector<ImageRecord> records);

    static Manifest load(const std::string& path);
    void save(const std::string& path) const;
    std::string to_jsonl() const;  // canonical serialization

    const ManifestHeader& header() const { return header_; }
    const std::vector<ImageRecord>& records() const { return records_; }

    bool contains(const std::string& image_id) const;
    const ImageRecord& record(const std::string& image_id) const;

    // Reference record followed by its distorted records (sorted by id).
    // For a standalone record, a singleton group.
    std::vector<const ImageRecord*> group_of(const std::string& image_id) const;

    // Group ids sorted lexicographically; FR groups only.
    std::vector<std::string> group_ids() const;
    const ImageRecord& reference_of(const std::string& group_id) const;
    std::vector<const ImageRecord*> distorted_of(const std::string& group_id) const;

private:
    void validate_and_index();

    ManifestHeader header_;
    std::vector<ImageRecord> records_;
    std::unordered_map<std::string, size_t> by_id_;
    std::map<std::string, std::vector<size_t>> groups_;  // group id -> distorted indices
    std::map<std::string, size_t> group_reference_;      // group id -> reference index
};

// image_id -> embedding vector; all vectors share one dimension.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::string encoder_tag, size_t dim);

    // CSV: image_id,v0,...,v{D-1}. Raw: little-endian float32 blocks with a
    // JSON sidecar {dim, ids}; pass the sidecar path.
    static EmbeddingTable load_csv(const std::string& path);
    static EmbeddingTable load_raw(const std::string& sidecar_path);
    static EmbeddingTable load(const std::string& path);  // dispatch on extension

    void insert(const std::string& image_id, std::vector<double> vec);

    size_t dim() const { return dim_; }
    size_t size() const { return vectors_.size(); }
    bool contains(const std::string& image_id) const;
    const std::vector<double>& at(const std::string& image_id) const;
    const std::string& encoder_tag() const { return encoder_tag_; }

private:
    std::string encoder_tag_;
    size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

struct ExpertScore {
    std::string expert_name;
    double raw_score;
};

// Per-image expert predictions; fused scores filled in by the sampler.
class ExpertScoreTable {
public:
    static ExpertScoreTable load_csv(const std::string& path);

    void add(const std::string& image_id, const std::string& expert_name, double raw_score);

    const std::vector<ExpertScore>& scores_of(const std::string& image_id) const;
    bool has_scores(const std::string& image_id) const;
    std::vector<std::string> expert_names() const;  // sorted, unique
    std::vector<std::string> image_ids() const;     // sorted

    void set_fused(const std::string& image_id, double value);
    std::optional<double> fused(const std::string& image_id) const;

private:
    std::map<std::string, std::vector<ExpertScore>> scores_;
    std::map<std::string, double> fused_;
};

}  // namespace iqa
