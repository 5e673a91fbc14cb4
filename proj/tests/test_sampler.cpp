#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "iqabench/error.hpp"
#include "iqabench/sampler.hpp"
#include "helpers.hpp"

using namespace iqa;

namespace {

// Independently coded greedy oracle over explicit (id, error) pairs and raw
// embedding vectors; MSE point-to-set distance, min or mean reduction.
std::vector<std::string> oracle_greedy(const std::map<std::string, double>& error,
                                       const std::map<std::string, std::vector<double>>& emb,
                                       double lambda, int n, bool mean_mode = false) {
    std::vector<std::string> chosen;
    std::set<std::string> remaining;
    for (const auto& [id, e] : error) remaining.insert(id);
    auto mse = [](const std::vector<double>& a, const std::vector<double>& b) {
        double acc = 0;
        for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
        return acc / static_cast<double>(a.size());
    };
    while (static_cast<int>(chosen.size()) < n && !remaining.empty()) {
        std::string best;
        double best_val = -1;
        for (const std::string& id : remaining) {
            double div = 0;
            if (!chosen.empty()) {
                double agg = mean_mode ? 0 : std::numeric_limits<double>::infinity();
                for (const std::string& s : chosen) {
                    const double d = mse(emb.at(id), emb.at(s));
                    if (mean_mode)
                        agg += d / static_cast<double>(chosen.size());
                    else
                        agg = std::min(agg, d);
                }
                div = agg;
            }
            const double val = error.at(id) + lambda * div;
            if (best.empty() || val > best_val || (val == best_val && id < best)) {
                best = id;
                best_val = val;
            }
        }
        chosen.push_back(best);
        remaining.erase(best);
    }
    return chosen;
}

ExpertScoreTable fused_table(const std::vector<std::pair<std::string, double>>& fused) {
    ExpertScoreTable t;
    for (const auto& [id, v] : fused) {
        t.add(id, "expert", v);
        t.set_fused(id, v);
    }
    return t;
}

}  // namespace

TEST_CASE("fuse_experts: expert equal to mos reproduces mos") {
    const Manifest m = testutil::make_nr_manifest(30, 4, true);
    ExpertScoreTable t;
    for (const ImageRecord& rec : m.records()) t.add(rec.image_id, "perfect", rec.mos);
    const FusionResult fr = fuse_experts(t, m);
    CHECK(fr.used_experts == std::vector<std::string>{"perfect"});
    for (const ImageRecord& rec : m.records())
        CHECK(std::abs(*t.fused(rec.image_id) - rec.mos) <= 1e-6);
}

TEST_CASE("fuse_experts: inverted expert remaps onto the human scale") {
    const Manifest m = testutil::make_nr_manifest(40, 12, true);
    ExpertScoreTable t;
    for (const ImageRecord& rec : m.records()) {
        t.add(rec.image_id, "straight", rec.mos);
        t.add(rec.image_id, "inverted", 100.0 - rec.mos);
    }
    const FusionResult fr = fuse_experts(t, m);
    CHECK(fr.used_experts.size() == 2);
    for (const ImageRecord& rec : m.records())
        CHECK(std::abs(*t.fused(rec.image_id) - rec.mos) <= 1e-4);
}

TEST_CASE("fuse_experts: constant column excluded with a warning") {
    const Manifest m = testutil::make_nr_manifest(20, 4, true);
    ExpertScoreTable t;
    for (const ImageRecord& rec : m.records()) {
        t.add(rec.image_id, "flat", 7.0);
        t.add(rec.image_id, "good", rec.mos);
    }
    const FusionResult fr = fuse_experts(t, m);
    CHECK(fr.excluded_experts == std::vector<std::string>{"flat"});
    CHECK_FALSE(fr.warnings.empty());
    for (const ImageRecord& rec : m.records())
        CHECK(std::abs(*t.fused(rec.image_id) - rec.mos) <= 1e-6);

    ExpertScoreTable only_flat;
    for (const ImageRecord& rec : m.records()) only_flat.add(rec.image_id, "flat", 7.0);
    CHECK_THROWS_AS(fuse_experts(only_flat, m), Error);
}

TEST_CASE("diversity: direct formulas") {
    EmbeddingTable emb("toy", 2);
    emb.insert("o", {0, 0});
    emb.insert("p", {3, 4});
    emb.insert("q", {1, 0});
    emb.insert("same", {3, 4});
    CHECK(diversity("p", {}, emb, DiversityMode::MinToSet) == 0.0);
    CHECK(diversity("p", {"o"}, emb, DiversityMode::MinToSet) == doctest::Approx(12.5));
    CHECK(diversity("same", {"p"}, emb, DiversityMode::MinToSet) == 0.0);
    // mean over three selected: MSE to o = 12.5, to q = 10.0, to same = 0
    CHECK(diversity("p", {"o", "q", "same"}, emb, DiversityMode::MeanToSet) ==
          doctest::Approx((12.5 + 10.0 + 0.0) / 3.0));
    CHECK(diversity("p", {"o", "q", "same"}, emb, DiversityMode::MinToSet) == 0.0);
}

TEST_CASE("select_distorted_fr ordering rules") {
    ManifestHeader h;
    h.scenario = Scenario::FR;
    std::vector<ImageRecord> recs;
    auto add = [&recs](const std::string& id, Role role, double mos, double stddev) {
        ImageRecord r;
        r.image_id = id;
        r.uri = id + ".png";
        r.role = role;
        r.content_group = "g";
        r.mos = mos;
        r.std = stddev;
        r.dataset_tag = "toy";
        recs.push_back(r);
    };
    add("g_ref", Role::Reference, 100, 0);

    SUBCASE("equal sigma: order equals descending absolute error") {
        add("a", Role::Distorted, 50, 2);
        add("b", Role::Distorted, 60, 2);
        add("c", Role::Distorted, 70, 2);
        const Manifest m(h, recs);
        const ExpertScoreTable t = fused_table({{"a", 55}, {"b", 75}, {"c", 71}});
        SamplerConfig cfg;
        cfg.k_select = 3;
        const SelectionResult sel = select_distorted_fr(m, "g", t, cfg);
        REQUIRE(sel.selected.size() == 3);
        CHECK(sel.selected[0].image_id == "b");  // |err| 15
        CHECK(sel.selected[1].image_id == "a");  // 5
        CHECK(sel.selected[2].image_id == "c");  // 1
        // greedy monotonicity of error terms
        CHECK(sel.selected[0].error_term >= sel.selected[1].error_term);
        CHECK(sel.selected[1].error_term >= sel.selected[2].error_term);
    }
    SUBCASE("sigma zero uses epsilon denominator") {
        add("a", Role::Distorted, 50, 0);
        const Manifest m(h, recs);
        const ExpertScoreTable t = fused_table({{"a", 60}});
        SamplerConfig cfg;
        cfg.k_select = 1;
        const SelectionResult sel = select_distorted_fr(m, "g", t, cfg);
        CHECK(sel.selected[0].error_term == doctest::Approx(100.0));  // 10^2 / (0 + 1)
    }
    SUBCASE("ties break lexicographically and K > group errors") {
        add("b", Role::Distorted, 50, 1);
        add("a", Role::Distorted, 50, 1);
        const Manifest m(h, recs);
        const ExpertScoreTable t = fused_table({{"a", 60}, {"b", 60}});
        SamplerConfig cfg;
        cfg.k_select = 2;
        const SelectionResult sel = select_distorted_fr(m, "g", t, cfg);
        CHECK(sel.selected[0].image_id == "a");
        CHECK(sel.selected[1].image_id == "b");
        cfg.k_select = 3;
        try {
            select_distorted_fr(m, "g", t, cfg);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("g") != std::string::npos);
        }
    }
}

TEST_CASE("select_references_fr matches the brute-force greedy oracle") {
    // 6 references x 2 distorted, 2-D embeddings
    ManifestHeader h;
    h.scenario = Scenario::FR;
    std::vector<ImageRecord> recs;
    EmbeddingTable emb("toy", 2);
    ExpertScoreTable table;
    Rng rng(21);
    std::map<std::string, double> ref_error;
    std::map<std::string, std::vector<double>> ref_emb;
    for (int g = 0; g < 6; ++g) {
        const std::string gid = "r" + std::to_string(g);
        ImageRecord ref;
        ref.image_id = gid;
        ref.uri = gid + ".png";
        ref.role = Role::Reference;
        ref.content_group = gid;
        ref.mos = 100;
        ref.dataset_tag = "toy";
        recs.push_back(ref);
        const std::vector<double> v = {rng.uniform01() * 4, rng.uniform01() * 4};
        emb.insert(gid, v);
        ref_emb[gid] = v;
        double mean_err = 0;
        for (int k = 0; k < 2; ++k) {
            ImageRecord d;
            d.image_id = gid + "_d" + std::to_string(k);
            d.uri = d.image_id + ".png";
            d.role = Role::Distorted;
            d.content_group = gid;
            d.mos = rng.uniform01() * 100;
            d.std = rng.uniform01() * 5;
            d.dataset_tag = "toy";
            recs.push_back(d);
            const double fused = d.mos + (rng.uniform01() * 20 - 10);
            table.add(d.image_id, "e", fused);
            table.set_fused(d.image_id, fused);
            mean_err += (fused - d.mos) * (fused - d.mos) / (d.std * d.std + 1.0) / 2.0;
        }
        ref_error[gid] = mean_err;
    }
    const Manifest m(h, recs);
    SamplerConfig cfg;
    cfg.n_select = 3;
    cfg.k_select = 2;

    const SelectionResult sel = select_references_fr(m, emb, table, cfg);
    const auto expected = oracle_greedy(ref_error, ref_emb, cfg.lambda, 3);
    REQUIRE(sel.selected.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(sel.selected[i].image_id == expected[i]);

    SUBCASE("lambda zero orders by descending error alone") {
        cfg.lambda = 0;
        cfg.n_select = 6;
        const SelectionResult flat = select_references_fr(m, emb, table, cfg);
        for (size_t i = 1; i < flat.selected.size(); ++i)
            CHECK(flat.selected[i - 1].error_term >= flat.selected[i].error_term);
    }
}

TEST_CASE("diversity term separates equal-error candidates") {
    ManifestHeader h;
    h.scenario = Scenario::NR;
    std::vector<ImageRecord> recs;
    EmbeddingTable emb("toy", 2);
    ExpertScoreTable table;
    auto add = [&](const std::string& id, double err, std::vector<double> v) {
        ImageRecord r;
        r.image_id = id;
        r.uri = id + ".png";
        r.role = Role::Standalone;
        r.mos = 50;
        r.std = 0;
        r.dataset_tag = "toy";
        recs.push_back(r);
        table.add(id, "e", 50 + err);
        table.set_fused(id, 50 + err);
        emb.insert(id, std::move(v));
    };
    add("top", 10, {0, 0});       // picked first: largest error
    add("near", 5, {0.1, 0});     // same error as far, nearly duplicate embedding
    add("far", 5, {10, 10});      // same error, distant: must be picked second
    const Manifest m(h, recs);
    SamplerConfig cfg;
    cfg.n_select = 2;
    cfg.lambda = 0.01;
    const SelectionResult sel = select_images_nr(m, emb, table, cfg);
    REQUIRE(sel.selected.size() == 2);
    CHECK(sel.selected[0].image_id == "top");
    CHECK(sel.selected[1].image_id == "far");
    CHECK(sel.selected[1].diversity_term > 0.0);
}

TEST_CASE("select_images_nr matches the brute-force oracle on 8 images") {
    const Manifest m = testutil::make_nr_manifest(8, 31);
    EmbeddingTable emb("toy", 3);
    ExpertScoreTable table;
    Rng rng(32);
    std::map<std::string, double> error;
    std::map<std::string, std::vector<double>> vecs;
    for (const ImageRecord& rec : m.records()) {
        const std::vector<double> v = {rng.uniform01(), rng.uniform01(), rng.uniform01()};
        emb.insert(rec.image_id, v);
        vecs[rec.image_id] = v;
        const double fused = rec.mos + (rng.uniform01() * 30 - 15);
        table.add(rec.image_id, "e", fused);
        table.set_fused(rec.image_id, fused);
        error[rec.image_id] =
            (fused - rec.mos) * (fused - rec.mos) / (rec.std * rec.std + 1.0);
    }
    SamplerConfig cfg;
    cfg.n_select = 4;
    cfg.lambda = 0.01;
    const SelectionResult sel = select_images_nr(m, emb, table, cfg);
    const auto expected = oracle_greedy(error, vecs, cfg.lambda, 4);
    REQUIRE(sel.selected.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(sel.selected[i].image_id == expected[i]);

    SUBCASE("N=1 is the plain argmax of the error term") {
        cfg.n_select = 1;
        const SelectionResult one = select_images_nr(m, emb, table, cfg);
        REQUIRE(one.selected.size() == 1);
        CHECK(one.selected[0].image_id == expected[0]);
    }
    SUBCASE("mean_to_set agrees with the mean-mode oracle") {
        cfg.n_select = 5;
        cfg.diversity_mode = DiversityMode::MeanToSet;
        const SelectionResult mean_sel = select_images_nr(m, emb, table, cfg);
        const auto mean_expected = oracle_greedy(error, vecs, cfg.lambda, 5, true);
        for (int i = 0; i < 5; ++i) CHECK(mean_sel.selected[i].image_id == mean_expected[i]);
    }
    SUBCASE("embedding scale c with lambda/c^2 preserves the sequence") {
        EmbeddingTable scaled("toy", 3);
        for (const auto& [id, v] : vecs) {
            std::vector<double> sv = v;
            for (double& x : sv) x *= 5.0;
            scaled.insert(id, std::move(sv));
        }
        SamplerConfig cfg2 = cfg;
        cfg2.lambda = cfg.lambda / 25.0;
        const SelectionResult a = select_images_nr(m, emb, table, cfg);
        const SelectionResult b = select_images_nr(m, scaled, table, cfg2);
        REQUIRE(a.selected.size() == b.selected.size());
        for (size_t i = 0; i < a.selected.size(); ++i)
            CHECK(a.selected[i].image_id == b.selected[i].image_id);
    }
    SUBCASE("identical runs serialize to identical bytes") {
        CHECK(select_images_nr(m, emb, table, cfg).to_json() ==
              select_images_nr(m, emb, table, cfg).to_json());
    }
}

TEST_CASE("variance normalization shifts selection toward low-sigma samples") {
    // sigma positively correlated with |error|: normalization must prefer
    // lower-sigma picks than the unnormalized objective
    int shifted = 0;
    const int seeds = 40;
    for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
        Rng rng(seed);
        ManifestHeader h;
        h.scenario = Scenario::NR;
        std::vector<ImageRecord> recs;
        ExpertScoreTable table;
        EmbeddingTable emb("toy", 2);
        for (int i = 0; i < 60; ++i) {
            ImageRecord r;
            r.image_id = "i" + std::to_string(100 + i);
            r.uri = r.image_id + ".png";
            r.role = Role::Standalone;
            r.mos = rng.uniform01() * 100;
            const double err = rng.uniform01() * 20;
            r.std = err * 0.4 + rng.uniform01() * 2.0;  // corr(sigma, |err|) >> 0.5
            r.dataset_tag = "toy";
            recs.push_back(r);
            table.add(r.image_id, "e", r.mos + err);
            table.set_fused(r.image_id, r.mos + err);
            emb.insert(r.image_id, {rng.uniform01(), rng.uniform01()});
        }
        const Manifest m(h, recs);
        SamplerConfig cfg;
        cfg.n_select = 10;
        auto mean_sigma = [&m](const SelectionResult& sel) {
            double acc = 0;
            for (const SelectionEntry& e : sel.selected) acc += m.record(e.image_id).std;
            return acc / sel.selected.size();
        };
        cfg.variance_normalize = true;
        const double with = mean_sigma(select_images_nr(m, emb, table, cfg));
        cfg.variance_normalize = false;
        const double without = mean_sigma(select_images_nr(m, emb, table, cfg));
        if (with < without) ++shifted;
    }
    CHECK(shifted >= seeds * 95 / 100);
}

TEST_CASE("uniform sampling is seeded and stratified") {
    SamplerConfig cfg;
    cfg.seed = 99;

    SUBCASE("same seed gives identical selections") {
        const Manifest m = testutil::make_nr_manifest(50, 2);
        cfg.n_select = 10;
        CHECK(sample_uniform_nr(m, cfg).to_json() == sample_uniform_nr(m, cfg).to_json());
        SamplerConfig other = cfg;
        other.seed = 100;
        CHECK(sample_uniform_nr(m, cfg).to_json() != sample_uniform_nr(m, other).to_json());
    }
    SUBCASE("K strata of size 1 select the whole group") {
        const Manifest m = testutil::make_fr_manifest(2, 10);
        cfg.n_select = 2;
        cfg.k_select = 10;
        const FrSelection sel = sample_uniform_fr(m, cfg);
        for (const auto& [gid, res] : sel.distorted) {
            std::set<std::string> ids;
            for (const SelectionEntry& e : res.selected) ids.insert(e.image_id);
            CHECK(ids.size() == 10);
        }
    }
    SUBCASE("K=5 takes one pick per mos quintile") {
        ManifestHeader h;
        h.scenario = Scenario::FR;
        std::vector<ImageRecord> recs;
        ImageRecord ref;
        ref.image_id = "g_ref";
        ref.uri = "r.png";
        ref.role = Role::Reference;
        ref.content_group = "g";
        ref.mos = 100;
        ref.dataset_tag = "toy";
        recs.push_back(ref);
        for (int i = 0; i < 20; ++i) {
            ImageRecord r;
            r.image_id = "d" + std::to_string(10 + i);
            r.uri = r.image_id + ".png";
            r.role = Role::Distorted;
            r.content_group = "g";
            r.mos = 2.5 + 5.0 * i;  // uniform spread over [0,100]
            r.dataset_tag = "toy";
            recs.push_back(r);
        }
        const Manifest m(h, recs);
        cfg.n_select = 1;
        cfg.k_select = 5;
        const FrSelection sel = sample_uniform_fr(m, cfg);
        const SelectionResult& res = sel.distorted.at("g");
        REQUIRE(res.selected.size() == 5);
        std::vector<int> strata;
        for (const SelectionEntry& e : res.selected) {
            const double mos = m.record(e.image_id).mos;
            strata.push_back(static_cast<int>(mos / 20.0));  // quintile of [0,100]
        }
        std::sort(strata.begin(), strata.end());
        CHECK(strata == std::vector<int>{0, 1, 2, 3, 4});
    }
    SUBCASE("insufficient images error") {
        const Manifest m = testutil::make_nr_manifest(3, 2);
        cfg.n_select = 10;
        CHECK_THROWS_AS(sample_uniform_nr(m, cfg), Error);
    }
}

TEST_CASE("select_difficult_fr combines reference and distorted picks") {
    const Manifest m = testutil::make_fr_manifest(5, 6, 17);
    EmbeddingTable emb("toy", 2);
    ExpertScoreTable table;
    Rng rng(18);
    for (const std::string& gid : m.group_ids())
        emb.insert(m.reference_of(gid).image_id, {rng.uniform01(), rng.uniform01()});
    for (const ImageRecord& rec : m.records()) {
        if (rec.role != Role::Distorted) continue;
        const double fused = rec.mos + rng.uniform01() * 10;
        table.add(rec.image_id, "e", fused);
        table.set_fused(rec.image_id, fused);
    }
    SamplerConfig cfg;
    cfg.n_select = 3;
    cfg.k_select = 4;
    const FrSelection sel = select_difficult_fr(m, emb, table, cfg);
    CHECK(sel.references.selected.size() == 3);
    CHECK(sel.distorted.size() == 3);
    for (const SelectionEntry& ref : sel.references.selected) {
        const std::string gid = m.record(ref.image_id).content_group;
        REQUIRE(sel.distorted.count(gid) == 1);
        CHECK(sel.distorted.at(gid).selected.size() == 4);
    }
    CHECK(sel.to_json() == select_difficult_fr(m, emb, table, cfg).to_json());
}
