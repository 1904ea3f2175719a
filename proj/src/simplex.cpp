#include "gateaux/simplex.hpp"

#include "gateaux/common.hpp"

#include <algorithm>
#include <cmath>

namespace gateaux {

namespace {

constexpr std::size_t kMaxIterations = 100000;
constexpr double kDegenerateTol = 1e-10;

class Tableau {
public:
    Tableau(const Eigen::MatrixXd& A, const Eigen::VectorXd& b)
        : m_(static_cast<std::size_t>(A.rows())), n_(static_cast<std::size_t>(A.cols())),
          t_(Eigen::MatrixXd::Zero(A.rows(), A.cols() + A.rows() + 1)), basis_(m_)
    {
        for (std::size_t i = 0; i < m_; ++i) {
            const double sign = b(static_cast<Eigen::Index>(i)) < 0.0 ? -1.0 : 1.0;
            const auto r = static_cast<Eigen::Index>(i);
            t_.row(r).head(A.cols()) = sign * A.row(r);
            t_(r, static_cast<Eigen::Index>(n_ + i)) = 1.0;
            t_(r, t_.cols() - 1) = sign * b(r);
            basis_[i] = n_ + i;
        }
    }

    std::size_t rows() const { return m_; }
    std::size_t structural() const { return n_; }
    std::size_t columns() const { return n_ + m_; }
    const std::vector<std::size_t>& basis() const { return basis_; }
    double rhs(std::size_t i) const { return t_(static_cast<Eigen::Index>(i), t_.cols() - 1); }
    double at(std::size_t i, std::size_t j) const { return t_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }

    void pivot(std::size_t row, std::size_t col)
    {
        const auto r = static_cast<Eigen::Index>(row);
        const auto c = static_cast<Eigen::Index>(col);
        t_.row(r) /= t_(r, c);
        for (Eigen::Index i = 0; i < t_.rows(); ++i) {
            if (i == r) continue;
            const double f = t_(i, c);
            if (f != 0.0) t_.row(i) -= f * t_.row(r);
        }
        basis_[row] = col;
    }

    /// Maximizes cost'x over columns with allowed[j]; returns iterations used.
    std::size_t optimize(const std::vector<double>& cost, const std::vector<bool>& allowed, double tol)
    {
        std::size_t it = 0;
        for (; it < kMaxIterations; ++it) {
            // reduced costs c_j - c_B' B^-1 A_j; Bland: first improving column
            std::size_t enter = columns();
            for (std::size_t j = 0; j < columns(); ++j) {
                if (!allowed[j] || is_basic(j)) continue;
                double rc = cost[j];
                for (std::size_t i = 0; i < m_; ++i) rc -= cost[basis_[i]] * at(i, j);
                if (rc > tol) {
                    enter = j;
                    break;
                }
            }
            if (enter == columns()) return it;
            std::size_t leave = m_;
            double best = 0.0;
            for (std::size_t i = 0; i < m_; ++i) {
                const double a = at(i, enter);
                if (a <= tol) continue;
                const double ratio = rhs(i) / a;
                if (leave == m_ || ratio < best - 1e-14 ||
                    (std::abs(ratio - best) <= 1e-14 && basis_[i] < basis_[leave])) {
                    leave = i;
                    best = ratio;
                }
            }
            if (leave == m_) throw NumericError("linear program is unbounded");
            pivot(leave, enter);
        }
        throw NumericError("simplex iteration limit reached");
    }

    bool is_basic(std::size_t j) const { return std::find(basis_.begin(), basis_.end(), j) != basis_.end(); }

private:
    std::size_t m_, n_;
    Eigen::MatrixXd t_;
    std::vector<std::size_t> basis_;
};

}  // namespace

SimplexResult simplex_maximize(const LinearProgram& lp, double tol)
{
    const auto m = static_cast<std::size_t>(lp.A.rows());
    const auto n = static_cast<std::size_t>(lp.A.cols());
    if (lp.b.size() != lp.A.rows() || lp.c.size() != lp.A.cols()) throw InvalidParameter("linear program dimensions disagree");
    if (!lp.A.allFinite() || !lp.b.allFinite() || !lp.c.allFinite()) throw InvalidParameter("linear program has non-finite data");

    Tableau tab(lp.A, lp.b);
    SimplexResult res;

    // Phase I: maximize -sum(artificials)
    std::vector<double> cost1(n + m, 0.0);
    for (std::size_t i = 0; i < m; ++i) cost1[n + i] = -1.0;
    std::vector<bool> all(n + m, true);
    res.iterations += tab.optimize(cost1, all, tol);
    double infeas = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        if (tab.basis()[i] >= n) infeas += tab.rhs(i);
    if (infeas > 1e-9) throw InfeasibleError("constraints admit no feasible occupancy measure");

    // drive zero-level artificials out of the basis where a structural pivot exists
    for (std::size_t i = 0; i < m; ++i) {
        if (tab.basis()[i] < n) continue;
        std::size_t best = n;
        double mag = 1e-9;
        for (std::size_t j = 0; j < n; ++j)
            if (!tab.is_basic(j) && std::abs(tab.at(i, j)) > mag) {
                mag = std::abs(tab.at(i, j));
                best = j;
            }
        if (best < n) tab.pivot(i, best);
    }

    // Phase II
    std::vector<double> cost2(n + m, 0.0);
    for (std::size_t j = 0; j < n; ++j) cost2[j] = lp.c(static_cast<Eigen::Index>(j));
    std::vector<bool> structural(n + m, false);
    for (std::size_t j = 0; j < n; ++j) structural[j] = true;
    res.iterations += tab.optimize(cost2, structural, tol);

    // refine on the final basis: B x_B = b, B' y = c_B (artificials are unit columns)
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    Eigen::VectorXd cB = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t j = tab.basis()[k];
        const auto col = static_cast<Eigen::Index>(k);
        if (j < n) {
            B.col(col) = lp.A.col(static_cast<Eigen::Index>(j));
            cB(col) = lp.c(static_cast<Eigen::Index>(j));
        } else {
            B(static_cast<Eigen::Index>(j - n), col) = 1.0;
        }
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    const Eigen::VectorXd xB = lu.solve(lp.b);
    res.y = lu.transpose().solve(cB);
    res.x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t j = tab.basis()[k];
        const double v = xB(static_cast<Eigen::Index>(k));
        if (j < n) res.x(static_cast<Eigen::Index>(j)) = v;
        if (std::abs(v) < kDegenerateTol) res.degenerate = true;
    }
    if (!res.x.allFinite() || !res.y.allFinite()) throw NumericError("singular final basis");
    for (std::size_t j = 0; j < n; ++j) {
        if (tab.is_basic(j)) continue;
        const double rc = lp.c(static_cast<Eigen::Index>(j)) - res.y.dot(lp.A.col(static_cast<Eigen::Index>(j)));
        if (std::abs(rc) < kDegenerateTol) res.degenerate = true;
    }
    res.objective = lp.c.dot(res.x);
    res.basis = tab.basis();
    std::sort(res.basis.begin(), res.basis.end());
    return res;
}

}  // namespace gateaux
