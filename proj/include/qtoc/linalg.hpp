// linalg.hpp — Complex matrices (dense or CSR sparse), state batches, and the
// Taylor-series action of the matrix exponential used by every propagation step.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qtoc/errors.hpp"

namespace qtoc {

using cxd = std::complex<double>;
using DenseMatrix = Eigen::MatrixXcd;
using SparseMatrixRM = Eigen::SparseMatrix<cxd, Eigen::RowMajor>;
using Vector = Eigen::VectorXcd;

// A batch of state vectors stored column-wise (d x m). A width-1 batch is an
// ordinary state vector.
using StateBatch = Eigen::MatrixXcd;

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr cxd kImag{0.0, 1.0};

// ---------------------------------------------------------------------------
// ComplexMatrix: a value that is either dense row-major-semantics or CSR.
// Conversions between the two forms are exact; the sparse form never stores
// explicit zeros.
// ---------------------------------------------------------------------------
class ComplexMatrix {
public:
    enum class Storage { Dense, Sparse };

    ComplexMatrix() = default;

    ComplexMatrix(DenseMatrix m) : kind_(Storage::Dense), dense_(std::move(m)) {
        if (!dense_.allFinite()) throw std::invalid_argument("ComplexMatrix: non-finite entries");
    }

    ComplexMatrix(const SparseMatrixRM& m) : kind_(Storage::Sparse), sparse_(m) {
        sparse_.prune([](Eigen::Index, Eigen::Index, const cxd& v) { return v != cxd(0.0, 0.0); });
        sparse_.makeCompressed();
        for (int k = 0; k < sparse_.outerSize(); ++k)
            for (SparseMatrixRM::InnerIterator it(sparse_, k); it; ++it)
                if (!std::isfinite(it.value().real()) || !std::isfinite(it.value().imag()))
                    throw std::invalid_argument("ComplexMatrix: non-finite entries");
    }

    Storage storage() const { return kind_; }
    bool is_sparse() const { return kind_ == Storage::Sparse; }
    Eigen::Index rows() const { return is_sparse() ? sparse_.rows() : dense_.rows(); }
    Eigen::Index cols() const { return is_sparse() ? sparse_.cols() : dense_.cols(); }

    const DenseMatrix& dense_ref() const {
        if (is_sparse()) throw std::logic_error("ComplexMatrix: dense_ref on sparse value");
        return dense_;
    }
    const SparseMatrixRM& sparse_ref() const {
        if (!is_sparse()) throw std::logic_error("ComplexMatrix: sparse_ref on dense value");
        return sparse_;
    }

    DenseMatrix to_dense() const { return is_sparse() ? DenseMatrix(sparse_) : dense_; }

    ComplexMatrix as_dense() const { return ComplexMatrix(to_dense()); }

    ComplexMatrix as_sparse() const {
        if (is_sparse()) return *this;
        SparseMatrixRM s(dense_.rows(), dense_.cols());
        std::vector<Eigen::Triplet<cxd>> trip;
        for (Eigen::Index i = 0; i < dense_.rows(); ++i)
            for (Eigen::Index j = 0; j < dense_.cols(); ++j)
                if (dense_(i, j) != cxd(0.0, 0.0)) trip.emplace_back(i, j, dense_(i, j));
        s.setFromTriplets(trip.begin(), trip.end());
        return ComplexMatrix(s);
    }

    cxd coeff(Eigen::Index i, Eigen::Index j) const {
        return is_sparse() ? sparse_.coeff(i, j) : dense_(i, j);
    }

    ComplexMatrix adjoint() const {
        if (is_sparse()) return ComplexMatrix(SparseMatrixRM(sparse_.adjoint()));
        return ComplexMatrix(DenseMatrix(dense_.adjoint()));
    }

    ComplexMatrix scaled(cxd a) const {
        if (is_sparse()) return ComplexMatrix(SparseMatrixRM(a * sparse_));
        return ComplexMatrix(DenseMatrix(a * dense_));
    }

    ComplexMatrix operator+(const ComplexMatrix& o) const {
        if (rows() != o.rows() || cols() != o.cols())
            throw std::invalid_argument("ComplexMatrix: size mismatch in add");
        if (is_sparse() && o.is_sparse()) return ComplexMatrix(SparseMatrixRM(sparse_ + o.sparse_));
        return ComplexMatrix(DenseMatrix(to_dense() + o.to_dense()));
    }

    ComplexMatrix operator*(const ComplexMatrix& o) const {
        if (cols() != o.rows()) throw std::invalid_argument("ComplexMatrix: size mismatch in mul");
        if (is_sparse() && o.is_sparse()) return ComplexMatrix(SparseMatrixRM(sparse_ * o.sparse_));
        return ComplexMatrix(DenseMatrix(to_dense() * o.to_dense()));
    }

    bool is_hermitian(double tol = 1e-12) const {
        DenseMatrix d = to_dense();
        if (d.rows() != d.cols()) return false;
        return (d - d.adjoint()).cwiseAbs().maxCoeff() <= tol;
    }

    double max_abs() const {
        if (!is_sparse()) return dense_.size() ? dense_.cwiseAbs().maxCoeff() : 0.0;
        double m = 0.0;
        for (int k = 0; k < sparse_.outerSize(); ++k)
            for (SparseMatrixRM::InnerIterator it(sparse_, k); it; ++it)
                m = std::max(m, std::abs(it.value()));
        return m;
    }

    static ComplexMatrix identity(Eigen::Index d) {
        SparseMatrixRM s(d, d);
        s.setIdentity();
        return ComplexMatrix(s);
    }

    static ComplexMatrix zero(Eigen::Index r, Eigen::Index c) {
        return ComplexMatrix(SparseMatrixRM(r, c));
    }

private:
    Storage kind_ = Storage::Dense;
    DenseMatrix dense_;
    SparseMatrixRM sparse_;
};

// ---------------------------------------------------------------------------
// Core products. Both paths below traverse column-by-column with ascending
// inner index, so the sparse and dense results for the same operand are
// bit-identical, and every output column depends only on its own input column.
// ---------------------------------------------------------------------------

inline void spmv_into(const ComplexMatrix& A, const StateBatch& V, StateBatch& out) {
    if (A.cols() != V.rows()) throw std::invalid_argument("spmv: dimension mismatch");
    out.resize(A.rows(), V.cols());
    if (A.is_sparse()) {
        const SparseMatrixRM& s = A.sparse_ref();
        const int* outer = s.outerIndexPtr();
        const int* inner = s.innerIndexPtr();
        const cxd* vals = s.valuePtr();
        for (Eigen::Index c = 0; c < V.cols(); ++c) {
            for (Eigen::Index i = 0; i < s.rows(); ++i) {
                cxd acc(0.0, 0.0);
                for (int k = outer[i]; k < outer[i + 1]; ++k) acc += vals[k] * V(inner[k], c);
                out(i, c) = acc;
            }
        }
    } else {
        const DenseMatrix& d = A.dense_ref();
        for (Eigen::Index c = 0; c < V.cols(); ++c) {
            for (Eigen::Index i = 0; i < d.rows(); ++i) {
                cxd acc(0.0, 0.0);
                for (Eigen::Index j = 0; j < d.cols(); ++j) acc += d(i, j) * V(j, c);
                out(i, c) = acc;
            }
        }
    }
}

inline StateBatch spmv(const ComplexMatrix& A, const StateBatch& V) {
    StateBatch out;
    spmv_into(A, V, out);
    return out;
}

// <u|v>, conjugate-linear in the first argument.
inline cxd inner(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) throw std::invalid_argument("inner: dimension mismatch");
    cxd acc(0.0, 0.0);
    for (Eigen::Index i = 0; i < u.size(); ++i) acc += std::conj(u(i)) * v(i);
    return acc;
}

inline double norm2(const Vector& v) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::norm(v(i));
    return acc;
}

inline double col_norm2(const StateBatch& V, Eigen::Index c) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < V.rows(); ++i) acc += std::norm(V(i, c));
    return acc;
}

// ---------------------------------------------------------------------------
// matvec_exp — exp(A) V via the iterative Taylor series
//     V + A V + A(A V)/2! + ...
// without ever forming A*A. The loop runs until the incremental term is small
// relative to the accumulated result in every column (max column-norm rule);
// a column that has already converged stops accumulating, which makes the
// result of a width-m batch bit-identical to m width-1 calls.
// ---------------------------------------------------------------------------
inline StateBatch matvec_exp(const ComplexMatrix& A, const StateBatch& V, double tol = 1e-12,
                             int max_terms = 64) {
    if (A.rows() != A.cols()) throw std::invalid_argument("matvec_exp: matrix not square");
    if (A.cols() != V.rows()) throw std::invalid_argument("matvec_exp: dimension mismatch");
    if (!(tol > 0.0)) throw std::invalid_argument("matvec_exp: tol must be > 0");
    if (max_terms < 1) throw std::invalid_argument("matvec_exp: max_terms must be >= 1");

    const Eigen::Index m = V.cols();
    StateBatch result = V;
    StateBatch term = V;
    StateBatch next;
    std::vector<bool> frozen(static_cast<std::size_t>(m), false);

    for (int k = 1; k <= max_terms; ++k) {
        spmv_into(A, term, next);
        const double inv_k = 1.0 / static_cast<double>(k);
        next *= inv_k;
        term.swap(next);

        bool all_frozen = true;
        for (Eigen::Index c = 0; c < m; ++c) {
            if (frozen[static_cast<std::size_t>(c)]) continue;
            for (Eigen::Index i = 0; i < V.rows(); ++i) result(i, c) += term(i, c);
            const double tn = std::sqrt(col_norm2(term, c));
            const double rn = std::sqrt(col_norm2(result, c));
            if (tn <= tol * (rn > 0.0 ? rn : 1.0))
                frozen[static_cast<std::size_t>(c)] = true;
            else
                all_frozen = false;
        }
        if (all_frozen) return result;
    }
    throw taylor_divergence("matvec_exp: no convergence within max_terms (shrink dt)");
}

// ---------------------------------------------------------------------------
// Small operator factories shared by the model and the tests.
// ---------------------------------------------------------------------------

inline ComplexMatrix lowering_operator(int n_levels) {
    SparseMatrixRM a(n_levels, n_levels);
    std::vector<Eigen::Triplet<cxd>> t;
    for (int n = 1; n < n_levels; ++n) t.emplace_back(n - 1, n, std::sqrt(double(n)));
    a.setFromTriplets(t.begin(), t.end());
    return ComplexMatrix(a);
}

inline ComplexMatrix number_operator(int n_levels) {
    SparseMatrixRM n(n_levels, n_levels);
    std::vector<Eigen::Triplet<cxd>> t;
    for (int k = 1; k < n_levels; ++k) t.emplace_back(k, k, double(k));
    n.setFromTriplets(t.begin(), t.end());
    return ComplexMatrix(n);
}

// |i><j| in a d-dimensional space.
inline ComplexMatrix basis_op(int d, int i, int j) {
    if (i < 0 || j < 0 || i >= d || j >= d) throw std::out_of_range("basis_op: index out of range");
    SparseMatrixRM m(d, d);
    m.insert(i, j) = 1.0;
    m.makeCompressed();
    return ComplexMatrix(m);
}

inline Vector basis_state(int d, int i) {
    if (i < 0 || i >= d) throw std::out_of_range("basis_state: index out of range");
    Vector v = Vector::Zero(d);
    v(i) = 1.0;
    return v;
}

inline ComplexMatrix kron(const ComplexMatrix& A, const ComplexMatrix& B) {
    SparseMatrixRM a = A.as_sparse().sparse_ref();
    SparseMatrixRM b = B.as_sparse().sparse_ref();
    SparseMatrixRM out(a.rows() * b.rows(), a.cols() * b.cols());
    std::vector<Eigen::Triplet<cxd>> t;
    t.reserve(static_cast<std::size_t>(a.nonZeros()) * static_cast<std::size_t>(b.nonZeros()));
    for (int ka = 0; ka < a.outerSize(); ++ka)
        for (SparseMatrixRM::InnerIterator ia(a, ka); ia; ++ia)
            for (int kb = 0; kb < b.outerSize(); ++kb)
                for (SparseMatrixRM::InnerIterator ib(b, kb); ib; ++ib)
                    t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                                   ia.value() * ib.value());
    out.setFromTriplets(t.begin(), t.end());
    return ComplexMatrix(out);
}

}  // namespace qtoc
