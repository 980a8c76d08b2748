#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace livegraph {

struct InteractionRecord {
    int student_id = 0;
    int exercise_id = 0;
    int correct = 0;
    double predicted_p = 0.5;  // model's correctness estimate at serve time
    std::int64_t timestamp = 0;
    bool probe = false;
};

// Per-recommendation-cycle summary, the substrate for the meta state.
struct CycleRecord {
    double acc1 = 0.0;      // Acc@1 over the last-20 interaction window
    double mean_rel = 0.0;  // mean phi_rel of the served list
    double mean_div = 0.0;
    double mean_unc = 0.0;
    double h_norm = 0.0;    // H(S) / (C(M,2) ln 2)
    double dh = 0.0;        // change in h_norm since previous cycle
    double nq_norm = 0.0;   // probes this session / 20
    double log_hist = 0.0;  // log1p(history length)
    double div_at_k = 0.0;  // DIV of the served list
};

struct InteractionLog {
    std::vector<InteractionRecord> records;
    std::vector<CycleRecord> cycles;
};

// Fraction of the last `window` records whose thresholded correctness
// prediction (predicted_p >= 0.5) matched the observed response.
double acc_at_1(const std::vector<InteractionRecord>& records, int window = 20);

}  // namespace livegraph
