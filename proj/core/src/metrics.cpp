#include "feddkd/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "feddkd/divergence.hpp"

namespace feddkd {

RoundRecord account_round(const RoundRecord& prev, int j_effective, double mean_steps_this_round) {
    if (j_effective < 0) throw std::invalid_argument("account_round: negative DKD step count");
    RoundRecord next = prev;
    next.round = prev.round + 1;
    next.comm_rounds_cum = prev.comm_rounds_cum + 1 + j_effective;
    next.dkd_steps_cum = prev.dkd_steps_cum + j_effective;
    next.train_steps_cum = prev.train_steps_cum + mean_steps_this_round;
    return next;
}

EvalResult evaluate(const ParamSet& params, const Dataset& ds) {
    ds.validate();
    if (ds.dim() != params.spec.input_dim())
        throw std::invalid_argument("evaluate: dataset width does not match model input");
    if (ds.num_classes != static_cast<int>(params.spec.num_classes()))
        throw std::invalid_argument("evaluate: dataset classes do not match model output");

    const Tensor logits = forward_logits(params, ds.features);
    const Tensor log_probs = log_softmax(logits);
    const std::size_t n = ds.size();
    const std::size_t c = params.spec.num_classes();
    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &logits.data()[i * c];
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;  // strict: ties keep the lowest index
        if (static_cast<int>(best) == ds.labels[i]) ++correct;
        loss -= log_probs[i * c + ds.labels[i]];
    }
    EvalResult r;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    r.loss = loss / static_cast<double>(n);
    return r;
}

void write_round_csv(const std::vector<RoundRecord>& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_round_csv: cannot open " + path);
    out << "round,comm_rounds,train_steps,dkd_steps,train_loss,val_acc,test_acc,wall_seconds\n";
    char buf[256];
    for (const RoundRecord& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%d,%.6f,%.6f,%.6f,%.6f\n", r.round,
                      r.comm_rounds_cum, r.train_steps_cum, r.dkd_steps_cum, r.train_loss,
                      r.val_accuracy, r.test_accuracy, r.wall_seconds);
        out << buf;
    }
    if (!out) throw std::runtime_error("write_round_csv: write failed for " + path);
}

TargetHit target_hit(const std::vector<RoundRecord>& history, double target) {
    TargetHit hit;
    for (const RoundRecord& r : history) {
        if (r.val_accuracy >= target) {
            hit.reached = true;
            hit.round = r.round;
            hit.comm_rounds = r.comm_rounds_cum;
            hit.train_steps = r.train_steps_cum;
            break;
        }
    }
    return hit;
}

std::vector<RoundRecord> read_round_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_round_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_round_csv: empty file " + path);
    std::vector<RoundRecord> history;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        RoundRecord r;
        const int got = std::sscanf(line.c_str(), "%d,%d,%lf,%d,%lf,%lf,%lf,%lf", &r.round,
                                    &r.comm_rounds_cum, &r.train_steps_cum, &r.dkd_steps_cum,
                                    &r.train_loss, &r.val_accuracy, &r.test_accuracy,
                                    &r.wall_seconds);
        if (got != 8)
            throw std::runtime_error("read_round_csv: " + path + " line " +
                                     std::to_string(line_no) + ": malformed row");
        history.push_back(r);
    }
    return history;
}

}  // namespace feddkd
