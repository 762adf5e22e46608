#include "stratx/types.hpp"

#include <cmath>
#include <unordered_map>

#include "stratx/errors.hpp"

namespace stratx {

std::vector<std::vector<int>> BlockStructure::units_by_block() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(num_blocks()));
    for (std::size_t m = 0; m < out.size(); ++m)
        out[m].reserve(static_cast<std::size_t>(sizes[m]));
    for (int i = 0; i < n(); ++i)
        out[static_cast<std::size_t>(block_of[static_cast<std::size_t>(i)])].push_back(i);
    return out;
}

BlockStructure BlockStructure::single(int n, int n1) {
    BlockStructure b;
    b.block_of.assign(static_cast<std::size_t>(n), 0);
    b.sizes = {n};
    b.treated = {n1};
    return b;
}

BlockStructure BlockStructure::from_labels(const std::vector<int>& labels) {
    BlockStructure b;
    b.block_of.reserve(labels.size());
    std::unordered_map<int, int> index_of;
    for (int label : labels) {
        auto [it, inserted] = index_of.try_emplace(label, static_cast<int>(b.sizes.size()));
        if (inserted) b.sizes.push_back(0);
        b.block_of.push_back(it->second);
        ++b.sizes[static_cast<std::size_t>(it->second)];
    }
    return b;
}

void BlockStructure::check_consistent() const {
    std::vector<int> counts(static_cast<std::size_t>(num_blocks()), 0);
    for (int m : block_of) {
        if (m < 0 || m >= num_blocks())
            throw DomainError("BlockStructure: membership index out of range");
        ++counts[static_cast<std::size_t>(m)];
    }
    for (int m = 0; m < num_blocks(); ++m) {
        if (counts[static_cast<std::size_t>(m)] != sizes[static_cast<std::size_t>(m)])
            throw DomainError("BlockStructure: sizes do not match membership");
    }
    if (treated_known()) {
        if (static_cast<int>(treated.size()) != num_blocks())
            throw DomainError("BlockStructure: treated counts length mismatch");
        for (int m = 0; m < num_blocks(); ++m) {
            const int n1 = treated[static_cast<std::size_t>(m)];
            if (n1 < 0 || n1 > sizes[static_cast<std::size_t>(m)])
                throw DomainError("BlockStructure: treated count out of range");
        }
    }
}

VectorXd PotentialOutcomeTable::reveal(const VectorXi& z) const {
    if (z.size() != y1.size()) throw DomainError("reveal: assignment length mismatch");
    VectorXd y(y1.size());
    for (Eigen::Index i = 0; i < y1.size(); ++i) y(i) = z(i) == 1 ? y1(i) : y0(i);
    return y;
}

namespace {

bool all_finite(const MatrixXd& m) {
    return m.allFinite();
}

// A column is linearly dependent on the block indicators iff its within-block
// variance is below 1e-12 * (column scale)^2 in every block.
bool block_dependent(const MatrixXd& mat, int col, const std::vector<std::vector<int>>& blocks) {
    const auto c = mat.col(col);
    const double mean_all = c.mean();
    double scale2 = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        const double d = c(i) - mean_all;
        scale2 += d * d;
    }
    scale2 /= std::max<double>(1.0, static_cast<double>(c.size()));
    if (scale2 <= 0.0) return true;  // globally constant
    for (const auto& units : blocks) {
        double mean_b = 0.0;
        for (int i : units) mean_b += c(i);
        mean_b /= static_cast<double>(units.size());
        double ss = 0.0;
        for (int i : units) {
            const double d = c(i) - mean_b;
            ss += d * d;
        }
        const double var_b = ss / static_cast<double>(units.size());
        if (var_b >= 1e-12 * scale2) return false;
    }
    return true;
}

}  // namespace

ValidationReport validate(const ExperimentData& data) {
    ValidationReport rep;
    const int n = data.n();

    try {
        data.blocks.check_consistent();
    } catch (const DomainError& e) {
        rep.violations.emplace_back(e.what());
        return rep;
    }

    if (data.X.size() > 0 && data.X.rows() != n)
        rep.violations.push_back("X has " + std::to_string(data.X.rows()) +
                                 " rows, expected " + std::to_string(n));
    if (data.W.size() > 0 && data.W.rows() != n)
        rep.violations.push_back("W has " + std::to_string(data.W.rows()) +
                                 " rows, expected " + std::to_string(n));
    if (data.has_assignment() && data.Z.size() != n)
        rep.violations.push_back("assignment vector length mismatch");
    if (data.has_outcome() && data.Y.size() != n)
        rep.violations.push_back("outcome vector length mismatch");
    if (!rep.violations.empty()) return rep;

    if (data.X.size() > 0 && !all_finite(data.X))
        rep.violations.push_back("X contains non-finite entries");
    if (data.W.size() > 0 && !all_finite(data.W))
        rep.violations.push_back("W contains non-finite entries");
    if (data.has_outcome() && !data.Y.allFinite())
        rep.violations.push_back("Y contains non-finite entries");

    if (data.has_assignment()) {
        for (Eigen::Index i = 0; i < data.Z.size(); ++i) {
            if (data.Z(i) != 0 && data.Z(i) != 1) {
                rep.violations.push_back("assignment entry at unit " + std::to_string(i + 1) +
                                         " is not 0/1");
                break;
            }
        }
    }

    const auto by_block = data.blocks.units_by_block();

    // 2 <= n_[m]1 <= n_[m] - 2 in every block.
    if (data.blocks.treated_known()) {
        for (int m = 0; m < data.blocks.num_blocks(); ++m) {
            const int nm = data.blocks.sizes[static_cast<std::size_t>(m)];
            const int n1 = data.blocks.treated[static_cast<std::size_t>(m)];
            if (n1 < 2)
                rep.violations.push_back("fewer than 2 treated units in block " +
                                         std::to_string(m + 1));
            if (nm - n1 < 2)
                rep.violations.push_back("fewer than 2 control units in block " +
                                         std::to_string(m + 1));
        }
    }

    // Assignment must realize the per-block treated counts.
    if (data.has_assignment() && data.blocks.treated_known()) {
        for (int m = 0; m < data.blocks.num_blocks(); ++m) {
            int z_sum = 0;
            for (int i : by_block[static_cast<std::size_t>(m)]) z_sum += data.Z(i);
            if (z_sum != data.blocks.treated[static_cast<std::size_t>(m)])
                rep.violations.push_back("assignment in block " + std::to_string(m + 1) +
                                         " has " + std::to_string(z_sum) +
                                         " treated, expected " +
                                         std::to_string(data.blocks.treated[static_cast<std::size_t>(m)]));
        }
    }

    for (int j = 0; j < data.p(); ++j) {
        if (block_dependent(data.X, j, by_block)) {
            rep.drop_x.push_back(j);
            rep.violations.push_back("covariate column x" + std::to_string(j + 1) +
                                     " is constant within every block (linearly dependent"
                                     " on the block indicators); drop recommended");
        }
    }
    for (int j = 0; j < data.k(); ++j) {
        if (block_dependent(data.W, j, by_block)) {
            rep.drop_w.push_back(j);
            rep.violations.push_back("design covariate column w" + std::to_string(j + 1) +
                                     " is constant within every block; drop recommended");
        }
    }

    return rep;
}

namespace {

MatrixXd without_columns(const MatrixXd& m, const std::vector<int>& drop) {
    if (drop.empty()) return m;
    std::vector<bool> dead(static_cast<std::size_t>(m.cols()), false);
    for (int j : drop) dead[static_cast<std::size_t>(j)] = true;
    MatrixXd out(m.rows(), m.cols() - static_cast<Eigen::Index>(drop.size()));
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        if (!dead[static_cast<std::size_t>(j)]) out.col(c++) = m.col(j);
    return out;
}

}  // namespace

ExperimentData drop_columns(const ExperimentData& data, const ValidationReport& report) {
    ExperimentData out = data;
    out.X = without_columns(data.X, report.drop_x);
    out.W = without_columns(data.W, report.drop_w);
    return out;
}

}  // namespace stratx
