#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace stratx {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

// Block (stratum) layout of an experiment. Blocks are indexed 0..M-1
// internally; external formats use 1..M. Treated counts may be unknown at
// design time (empty vector) and are filled once an assignment rule exists.
struct BlockStructure {
    std::vector<int> block_of;  // unit -> block index
    std::vector<int> sizes;     // n_[m]
    std::vector<int> treated;   // n_[m]1; empty when not yet determined

    int n() const { return static_cast<int>(block_of.size()); }
    int num_blocks() const { return static_cast<int>(sizes.size()); }
    bool treated_known() const { return !treated.empty(); }

    // pi_[m] = n_[m] / n
    double weight(int m) const { return sizes[static_cast<std::size_t>(m)] / static_cast<double>(n()); }
    // e_[m] = n_[m]1 / n_[m]
    double propensity(int m) const {
        return treated[static_cast<std::size_t>(m)] /
               static_cast<double>(sizes[static_cast<std::size_t>(m)]);
    }

    // Unit indices grouped by block, in unit order.
    std::vector<std::vector<int>> units_by_block() const;

    // Single block of n units with n1 treated (complete randomization).
    static BlockStructure single(int n, int n1);

    // Build from per-unit labels (any integers); blocks keep first-appearance
    // order. Treated counts left unknown.
    static BlockStructure from_labels(const std::vector<int>& labels);

    // Throws DomainError on internal inconsistency (sizes not matching
    // membership, treated counts out of range).
    void check_consistent() const;
};

// Observed world of the analyzer: covariates, design covariates, blocks,
// assignment, outcomes. Z and Y may be empty (design stage). All types here
// are immutable-by-convention after construction and safe to share across
// threads.
struct ExperimentData {
    MatrixXd X;            // n x p analysis covariates
    MatrixXd W;            // n x k design covariates (0 cols when absent)
    BlockStructure blocks;
    VectorXi Z;            // 0/1 assignment, size n or 0
    VectorXd Y;            // observed outcomes, size n or 0

    int n() const { return blocks.n(); }
    int p() const { return static_cast<int>(X.cols()); }
    int k() const { return static_cast<int>(W.cols()); }
    bool has_assignment() const { return Z.size() > 0; }
    bool has_outcome() const { return Y.size() > 0; }
};

// Simulation-only ground truth.
struct PotentialOutcomeTable {
    VectorXd y1;
    VectorXd y0;

    double tau() const { return (y1 - y0).mean(); }

    // Y_i = Z_i * Y_i(1) + (1 - Z_i) * Y_i(0)
    VectorXd reveal(const VectorXi& z) const;
};

struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<int> drop_x;  // X columns linearly dependent on the blocks
    std::vector<int> drop_w;  // same for W
    bool ok() const { return violations.empty(); }
};

// Pure check of the analysis assumptions: per-arm-per-block counts >= 2,
// finite entries, dimension consistency, and within-block-constant columns
// (reported with a drop list). Report-style: callers decide whether to abort.
ValidationReport validate(const ExperimentData& data);

// Copy of data without the columns named in the report's drop lists.
ExperimentData drop_columns(const ExperimentData& data, const ValidationReport& report);

}  // namespace stratx
