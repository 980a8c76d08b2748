#include "livegraph/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace livegraph {

namespace {

const char* kCsvHeader = "student_id,exercise_id,concept_ids,correct,timestamp,probe";

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.push_back("");
    return out;
}

long long parse_int(const std::string& s, int line_no, const char* what) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    }
}

}  // namespace

InteractionDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty dataset file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader)
        throw DataError("line 1: expected header '" + std::string(kCsvHeader) + "', got '" +
                        line + "'");

    InteractionDataset ds;
    std::map<int, std::vector<int>> exercise_concepts;
    std::map<int, std::vector<InteractionItem>> histories;
    int line_no = 1;
    int max_concept = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 6)
            throw DataError("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                            std::to_string(fields.size()));
        InteractionRow row;
        row.student_id = static_cast<int>(parse_int(fields[0], line_no, "student_id"));
        row.exercise_id = static_cast<int>(parse_int(fields[1], line_no, "exercise_id"));
        for (const std::string& c : split(fields[2], ';')) {
            if (c.empty()) continue;
            const int k = static_cast<int>(parse_int(c, line_no, "concept id"));
            if (k < 0) throw DataError("line " + std::to_string(line_no) + ": negative concept id");
            row.concept_ids.push_back(k);
            max_concept = std::max(max_concept, k);
        }
        if (row.concept_ids.empty())
            throw DataError("line " + std::to_string(line_no) + ": exercise without concepts");
        row.correct = static_cast<int>(parse_int(fields[3], line_no, "correct"));
        if (row.correct != 0 && row.correct != 1)
            throw DataError("line " + std::to_string(line_no) + ": correct must be 0 or 1");
        row.timestamp = parse_int(fields[4], line_no, "timestamp");
        row.probe = static_cast<int>(parse_int(fields[5], line_no, "probe"));
        if (row.probe != 0 && row.probe != 1)
            throw DataError("line " + std::to_string(line_no) + ": probe must be 0 or 1");

        std::vector<int> sorted = row.concept_ids;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        auto it = exercise_concepts.find(row.exercise_id);
        if (it == exercise_concepts.end()) {
            exercise_concepts.emplace(row.exercise_id, sorted);
        } else if (it->second != sorted) {
            throw DataError("line " + std::to_string(line_no) +
                            ": exercise id " + std::to_string(row.exercise_id) +
                            " re-declared with different concepts");
        }
        histories[row.student_id].push_back(
            InteractionItem{row.exercise_id, row.correct, row.timestamp});
        ds.rows.push_back(std::move(row));
    }
    if (ds.rows.empty()) throw DataError("dataset has a header but no rows: " + path);

    ds.num_concepts = max_concept + 1;
    for (const auto& [id, concepts] : exercise_concepts) {
        Exercise e;
        e.id = id;
        e.concepts = concepts;
        ds.catalog.add(std::move(e));
    }
    for (const auto& [sid, hist] : histories) {
        StudentProfile p;
        p.student_id = sid;
        p.history = hist;
        ds.students.push_back(std::move(p));
    }
    return ds;
}

void save_dataset(const InteractionDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset: " + path);
    out << kCsvHeader << "\n";
    for (const InteractionRow& r : dataset.rows) {
        out << r.student_id << ',' << r.exercise_id << ',';
        for (std::size_t i = 0; i < r.concept_ids.size(); ++i) {
            if (i) out << ';';
            out << r.concept_ids[i];
        }
        out << ',' << r.correct << ',' << r.timestamp << ',' << r.probe << "\n";
    }
}

namespace {

double ability(int cluster, int progress) {
    if (cluster < progress) return 2.0;
    if (cluster == progress) return 0.3;
    return -2.0;
}

double mean_ability(const std::vector<int>& concepts, const std::vector<int>& cluster_of,
                    int progress) {
    double sum = 0.0;
    for (int k : concepts) sum += ability(cluster_of[k], progress);
    return sum / static_cast<double>(concepts.size());
}

}  // namespace

SyntheticWorld generate_world(const WorldConfig& cfg, std::uint64_t seed) {
    if (cfg.num_concepts < 1 || cfg.clusters < 1 || cfg.num_concepts < cfg.clusters)
        throw ConfigError("generate_world: need num_concepts >= clusters >= 1");
    if (cfg.concepts_min < 1 || cfg.concepts_max < cfg.concepts_min)
        throw ConfigError("generate_world: bad concepts-per-exercise range");
    if (cfg.concepts_max > cfg.num_concepts)
        throw ConfigError("generate_world: more concepts per exercise than concepts exist");
    if (cfg.num_exercises < 1 || cfg.num_students < 1)
        throw ConfigError("generate_world: need at least one exercise and one student");

    SyntheticWorld w;
    w.cfg = cfg;
    w.seed = seed;
    Rng rng(seed, "world");

    const int M = cfg.num_concepts;
    w.cluster_of.resize(M);
    std::vector<std::vector<int>> members(cfg.clusters);
    for (int k = 0; k < M; ++k) {
        const int c = static_cast<int>(static_cast<long long>(k) * cfg.clusters / M);
        w.cluster_of[k] = c;
        members[c].push_back(k);
    }

    w.z_star = Vec(M);
    for (int k = 0; k < M; ++k) w.z_star(k) = w.cluster_of[k] + 0.03 * rng.normal();

    const double b_star = logit(cfg.within_s);
    const double c_star = b_star - logit(cfg.adjacent_s);
    w.S_star = Mat(M, M);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) {
            const double d = w.z_star(i) - w.z_star(j);
            w.S_star(i, j) = sigmoid(b_star - c_star * d * d);
        }

    auto sample_distinct = [&](const std::vector<int>& pool, int n) {
        std::vector<int> picked;
        std::vector<int> avail = pool;
        for (int t = 0; t < n && !avail.empty(); ++t) {
            const std::size_t at = rng.index(avail.size());
            picked.push_back(avail[at]);
            avail.erase(avail.begin() + static_cast<long>(at));
        }
        std::sort(picked.begin(), picked.end());
        return picked;
    };

    w.difficulty = Vec(cfg.num_exercises);
    w.is_bridge.resize(cfg.num_exercises);
    std::vector<std::vector<int>> within_by_cluster(cfg.clusters);
    std::vector<std::vector<int>> bridge_by_pair(std::max(1, cfg.clusters - 1));
    for (int e = 0; e < cfg.num_exercises; ++e) {
        const bool bridge = cfg.clusters >= 2 && rng.uniform() < cfg.bridge_fraction;
        const int size = cfg.concepts_min +
                         static_cast<int>(rng.index(cfg.concepts_max - cfg.concepts_min + 1));
        Exercise ex;
        ex.id = e;
        if (bridge) {
            const int c = static_cast<int>(rng.index(cfg.clusters - 1));
            const int from_lo = 1 + static_cast<int>(rng.index(std::max(1, size - 1)));
            auto lo = sample_distinct(members[c], std::min<int>(from_lo, size - 1));
            auto hi = sample_distinct(members[c + 1], size - static_cast<int>(lo.size()));
            ex.concepts = lo;
            ex.concepts.insert(ex.concepts.end(), hi.begin(), hi.end());
            std::sort(ex.concepts.begin(), ex.concepts.end());
            bridge_by_pair[c].push_back(e);
        } else {
            const int c = static_cast<int>(rng.index(cfg.clusters));
            ex.concepts = sample_distinct(members[c], size);
            within_by_cluster[c].push_back(e);
        }
        w.is_bridge[e] = bridge;
        w.difficulty(e) = rng.normal(0.0, cfg.difficulty_sigma);
        w.dataset.catalog.add(std::move(ex));
    }

    w.dataset.num_concepts = M;
    w.theta_star = Mat(cfg.num_students, M);
    w.frontier.resize(cfg.num_students);
    for (int s = 0; s < cfg.num_students; ++s) {
        double u = rng.uniform();
        if (u < 1e-12) u = 1e-12;
        const double draw = cfg.min_history * std::pow(u, -1.0 / cfg.pareto_alpha);
        const int T = std::clamp(static_cast<int>(std::llround(draw)), cfg.min_history,
                                 cfg.max_history);
        const int frontier = std::min(cfg.clusters - 1, T / cfg.steps_per_cluster);
        w.frontier[s] = frontier;
        for (int k = 0; k < M; ++k) w.theta_star(s, k) = ability(w.cluster_of[k], frontier);

        StudentProfile prof;
        prof.student_id = s;
        for (int t = 0; t < T; ++t) {
            const int prog = std::min(frontier, t / cfg.steps_per_cluster);
            int e = -1;
            const bool try_bridge = prog < cfg.clusters - 1 && !bridge_by_pair[prog].empty() &&
                                    rng.uniform() < cfg.bridge_pick_prob;
            if (try_bridge) {
                e = bridge_by_pair[prog][rng.index(bridge_by_pair[prog].size())];
            } else if (!within_by_cluster[prog].empty()) {
                e = within_by_cluster[prog][rng.index(within_by_cluster[prog].size())];
            } else {
                e = static_cast<int>(rng.index(cfg.num_exercises));
            }
            const Exercise& ex = w.dataset.catalog.by_id(e);
            const double p =
                sigmoid(mean_ability(ex.concepts, w.cluster_of, prog) - w.difficulty(e));
            const int a = rng.bernoulli(p);
            InteractionRow row;
            row.student_id = s;
            row.exercise_id = e;
            row.concept_ids = ex.concepts;
            row.correct = a;
            row.timestamp = t;
            row.probe = 0;
            w.dataset.rows.push_back(std::move(row));
            prof.history.push_back(InteractionItem{e, a, t});
        }
        w.dataset.students.push_back(std::move(prof));
    }
    return w;
}

double response_probability(const SyntheticWorld& world, int student_id, int exercise_id) {
    const Exercise& ex = world.dataset.catalog.by_id(exercise_id);
    double sum = 0.0;
    for (int k : ex.concepts) sum += world.theta_star(student_id, k);
    sum /= static_cast<double>(ex.concepts.size());
    return sigmoid(sum - world.difficulty(exercise_id));
}

int simulate_response(const SyntheticWorld& world, int student_id, int exercise_id,
                      std::uint64_t step) {
    Rng rng(world.seed, "response",
            hash_combine(hash_combine(static_cast<std::uint64_t>(student_id),
                                      static_cast<std::uint64_t>(exercise_id)),
                         step));
    return rng.bernoulli(response_probability(world, student_id, exercise_id));
}

int simulate_probe_response(const SyntheticWorld& world, int i, int j, std::uint64_t step) {
    Rng rng(world.seed, "probe-response",
            hash_combine(hash_combine(static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(j)),
                         step));
    return rng.bernoulli(world.S_star(i, j));
}

double ndcg_at_k(const std::vector<int>& ranked_ids, const std::set<int>& relevant, int k) {
    if (relevant.empty()) return 0.0;
    const int n = std::min<int>(k, static_cast<int>(ranked_ids.size()));
    double dcg = 0.0;
    for (int r = 0; r < n; ++r)
        if (relevant.count(ranked_ids[r])) dcg += 1.0 / std::log2(r + 2.0);
    const int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
    double idcg = 0.0;
    for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(r + 2.0);
    return dcg / idcg;
}

double recall_at_k(const std::vector<int>& ranked_ids, const std::set<int>& relevant, int k) {
    if (relevant.empty()) return 0.0;
    const int n = std::min<int>(k, static_cast<int>(ranked_ids.size()));
    int hits = 0;
    for (int r = 0; r < n; ++r)
        if (relevant.count(ranked_ids[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double f1_at_k(const std::vector<int>& ranked_ids, const std::set<int>& relevant, int k) {
    if (relevant.empty() || k == 0) return 0.0;
    const int n = std::min<int>(k, static_cast<int>(ranked_ids.size()));
    int hits = 0;
    for (int r = 0; r < n; ++r)
        if (relevant.count(ranked_ids[r])) ++hits;
    if (hits == 0) return 0.0;
    const double prec = static_cast<double>(hits) / static_cast<double>(k);
    const double rec = static_cast<double>(hits) / static_cast<double>(relevant.size());
    return 2.0 * prec * rec / (prec + rec);
}

double div_at_k(const std::vector<int>& ranked_ids, const ExerciseCatalog& catalog, int k) {
    const int n = std::min<int>(k, static_cast<int>(ranked_ids.size()));
    if (n == 0) return 0.0;
    std::set<int> seen;
    std::size_t total = 0;
    for (int r = 0; r < n; ++r) {
        const Exercise& e = catalog.by_id(ranked_ids[r]);
        seen.insert(e.concepts.begin(), e.concepts.end());
        total += e.concepts.size();
    }
    return static_cast<double>(seen.size()) / static_cast<double>(total);
}

CohortSplit split_cohorts(const std::map<int, int>& counts_by_student) {
    CohortSplit out;
    if (counts_by_student.empty()) {
        out.degenerate = true;
        return out;
    }
    std::vector<int> counts;
    counts.reserve(counts_by_student.size());
    for (const auto& [id, c] : counts_by_student) counts.push_back(c);
    std::sort(counts.begin(), counts.end());
    const std::size_t n = counts.size();
    const double median = (n % 2 == 1)
                              ? counts[n / 2]
                              : 0.5 * (counts[n / 2 - 1] + counts[n / 2]);
    for (const auto& [id, c] : counts_by_student) {
        if (c > median) out.active_ids.push_back(id);
        else out.inactive_ids.push_back(id);
    }
    out.degenerate = out.active_ids.empty();
    return out;
}

namespace {

struct Accumulator {
    std::array<double, 4> ndcg{}, recall{}, f1{}, div{};
    int n = 0;

    void add(const StudentRanking& r, const ExerciseCatalog& catalog) {
        for (std::size_t c = 0; c < kMetricCutoffs.size(); ++c) {
            const int k = kMetricCutoffs[c];
            ndcg[c] += ndcg_at_k(r.ranked_ids, r.relevant, k);
            recall[c] += recall_at_k(r.ranked_ids, r.relevant, k);
            f1[c] += f1_at_k(r.ranked_ids, r.relevant, k);
            div[c] += div_at_k(r.ranked_ids, catalog, k);
        }
        ++n;
    }

    CohortMetrics mean() const {
        CohortMetrics m;
        m.students = n;
        if (n == 0) return m;
        for (std::size_t c = 0; c < 4; ++c) {
            m.ndcg[c] = ndcg[c] / n;
            m.recall[c] = recall[c] / n;
            m.f1[c] = f1[c] / n;
            m.div[c] = div[c] / n;
        }
        return m;
    }
};

}  // namespace

MetricReport evaluate_rankings(const std::vector<StudentRanking>& rankings,
                               const ExerciseCatalog& catalog) {
    MetricReport report;
    Accumulator overall, active, inactive;
    for (const StudentRanking& r : rankings) {
        if (r.relevant.empty()) {
            ++report.excluded;
            continue;
        }
        overall.add(r, catalog);
        (r.active ? active : inactive).add(r, catalog);
    }
    report.overall = overall.mean();
    report.active = active.mean();
    report.inactive = inactive.mean();
    return report;
}

std::set<int> holdout_set(const StudentProfile& profile, int holdout) {
    std::set<int> out;
    const std::size_t n = profile.history.size();
    const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(holdout));
    for (std::size_t i = n - take; i < n; ++i) out.insert(profile.history[i].exercise_id);
    return out;
}

}  // namespace livegraph
