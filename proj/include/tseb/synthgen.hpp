#pragma once

#include "tseb/table.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace tseb {

// Parameters of the confounded synthetic data generator. The confounding rate
// controls how many leading covariates enter the treatment assignment, the
// confounding strength their coefficient.
struct SynthConfig {
    Eigen::Index n = 100000;
    Eigen::Index p = 100;
    double confounding_rate = 0.4;      // r_c in [0,1]
    double confounding_strength = 0.5;  // s_c in [0,1]
    int od_trials = 100;                // binomial n-parameter of the cell labels
    double od_prob = 0.9;               // binomial success probability
    double treatment_shift = 0.4;       // dose below this maps to 0
    std::uint64_t seed = 1;

    Eigen::Index confounder_count() const {
        return static_cast<Eigen::Index>(static_cast<double>(p) * confounding_rate);
    }
    // Throws ConfigError on out-of-range parameters.
    void validate() const;
};

// n x p matrix of independent standard normal draws.
Eigen::MatrixXd gen_features(const SynthConfig& cfg, std::mt19937_64& rng);

// One Binomial(od_trials, od_prob) draw per row, used as categorical cell id.
std::vector<int> gen_cells(const SynthConfig& cfg, std::mt19937_64& rng);

struct TreatmentDraw {
    Eigen::VectorXd t_raw;      // min-max normalized onto [0,1]
    Eigen::VectorXd treatment;  // shifted: t_raw - shift where t_raw > shift, else 0
};

// Confounded dose: min-max normalize the strength-weighted sum of the first
// floor(p*r_c) covariates plus unit normal noise, then shift-threshold.
TreatmentDraw gen_treatment(const Eigen::MatrixXd& X, const SynthConfig& cfg,
                            std::mt19937_64& rng);

// Linear outcome: Y = T + sum over even 1-based columns j of (j/2 + T) * x_j,
// plus centered normal noise with standard deviation noise_sd.
Eigen::VectorXd gen_outcome(const Eigen::MatrixXd& X, const Eigen::VectorXd& T,
                            std::mt19937_64& rng, double noise_sd = 3.0);

// Composes the four generators over one seeded stream. Cell labels realized
// with a single row are merged into the nearest populated label so every cell
// supports per-cell standardization. Adds a binary outcome column from a
// median split of Y.
ObservationTable gen_dataset(const SynthConfig& cfg);

}  // namespace tseb
