// autodiff.hpp — Reverse-mode automatic differentiation over complex scalars
// and matrices, recorded on an eager tape whose shape may be decided at run
// time (conditional graphing: a jump and a no-jump branch produce different,
// fully independent tapes).
//
// Convention: for a node with value x the stored adjoint is
//     adj(x) = dC/dRe(x) + i dC/dIm(x),   elementwise for matrices,
// i.e. every complex quantity is differentiated as a pair of real degrees of
// freedom. Costs are real scalars, so no Wirtinger bookkeeping is needed, and
// finite-difference checks against the real and imaginary parts separately are
// well defined. Under this convention the matmul adjoints are
//     adj(A) += adj(W) B^dagger,   adj(B) += A^dagger adj(W)   for W = A B,
// which is the variant of the textbook rule that passes finite-difference
// checks for complex operands (transposes alone are not enough).
//
// The matrix exponential is deliberately NOT a primitive: propagation steps
// are recorded as the explicit Taylor recurrence over Apply/Smul/Add/Scale, so
// the gradient is exact for the truncated series that was actually evaluated.

#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "qtoc/errors.hpp"
#include "qtoc/linalg.hpp"

namespace qtoc {

using NodeId = std::int32_t;
constexpr NodeId kNoNode = -1;
using OperatorId = std::int32_t;

enum class Op : std::uint8_t {
    Constant,
    Leaf,
    Add,
    Sub,
    Mul,    // scalar * scalar
    Div,    // scalar / scalar
    Exp,    // scalar only; matrix exponentials must use the Taylor recurrence
    Sqrt,   // scalar
    Scale,  // fixed complex coefficient * value
    Smul,   // scalar node * matrix node
    Matmul,
    Apply,  // fixed linear operator (from the operator table) * value
    Trace,
    Transpose,
    Conjugate,
    Inner,  // <u|v>, conjugate-linear in u
    Abs2,   // elementwise |z|^2, real result
    Re,
    Im,
    Norm2,  // squared Frobenius norm, real scalar
    Norm,   // Frobenius norm, real scalar
    Col,    // extract column aux
    SetCol, // replace column aux of input 0 with input 1
};

// Constant linear maps (Hamiltonian pieces, jump operators) live outside the
// node list; Apply references them by id. The adjoint map is precomputed.
class OperatorTable {
public:
    OperatorId add(const ComplexMatrix& m) {
        ops_.push_back({m, m.adjoint()});
        return static_cast<OperatorId>(ops_.size() - 1);
    }
    const ComplexMatrix& fwd(OperatorId id) const { return ops_.at(id).fwd; }
    const ComplexMatrix& adj(OperatorId id) const { return ops_.at(id).adj; }
    std::size_t size() const { return ops_.size(); }

private:
    struct Entry {
        ComplexMatrix fwd, adj;
    };
    std::vector<Entry> ops_;
};

struct Node {
    Op op;
    NodeId a = kNoNode;
    NodeId b = kNoNode;
    std::int32_t aux = 0;  // operator id for Apply, column index for Col/SetCol
    cxd coeff{0.0, 0.0};   // Scale coefficient
    DenseMatrix value;     // scalars are 1x1
};

// Leaf adjoints returned by a backward pass. Leaves without a path to the
// seeded outputs report zero.
class Gradients {
public:
    explicit Gradients(std::unordered_map<NodeId, DenseMatrix> m) : adj_(std::move(m)) {}
    const DenseMatrix& at(NodeId id) const { return adj_.at(id); }
    cxd scalar(NodeId id) const { return adj_.at(id)(0, 0); }
    // Gradient with respect to a real-valued leaf.
    double real(NodeId id) const { return adj_.at(id)(0, 0).real(); }
    std::size_t size() const { return adj_.size(); }

private:
    std::unordered_map<NodeId, DenseMatrix> adj_;
};

class Tape {
public:
    Tape() = default;
    explicit Tape(std::shared_ptr<const OperatorTable> table) : table_(std::move(table)) {}

    // ---- recording -------------------------------------------------------

    NodeId constant(DenseMatrix m) { return push(Op::Constant, kNoNode, kNoNode, std::move(m)); }
    NodeId constant(cxd z) { return constant(scalar_value(z)); }
    NodeId constant(double x) { return constant(cxd(x, 0.0)); }

    NodeId leaf(DenseMatrix m) {
        NodeId id = push(Op::Leaf, kNoNode, kNoNode, std::move(m));
        leaves_.push_back(id);
        return id;
    }
    NodeId leaf(cxd z) { return leaf(scalar_value(z)); }
    NodeId leaf(double x) { return leaf(cxd(x, 0.0)); }

    NodeId add(NodeId a, NodeId b) {
        require_same_shape(a, b, "add");
        return push(Op::Add, a, b, val(a) + val(b));
    }
    NodeId sub(NodeId a, NodeId b) {
        require_same_shape(a, b, "sub");
        return push(Op::Sub, a, b, val(a) - val(b));
    }
    NodeId mul(NodeId a, NodeId b) {
        require_scalar(a, "mul");
        require_scalar(b, "mul");
        return push(Op::Mul, a, b, scalar_value(scalar(a) * scalar(b)));
    }
    NodeId div(NodeId a, NodeId b) {
        require_scalar(a, "div");
        require_scalar(b, "div");
        if (scalar(b) == cxd(0.0, 0.0)) throw singular_op("div: division by zero");
        return push(Op::Div, a, b, scalar_value(scalar(a) / scalar(b)));
    }
    NodeId exp_(NodeId a) {
        require_scalar(a, "exp");  // matrix EXP is not a primitive by design
        return push(Op::Exp, a, kNoNode, scalar_value(std::exp(scalar(a))));
    }
    NodeId sqrt_(NodeId a) {
        require_scalar(a, "sqrt");
        return push(Op::Sqrt, a, kNoNode, scalar_value(std::sqrt(scalar(a))));
    }
    NodeId scale(cxd c, NodeId a) {
        NodeId id = push(Op::Scale, a, kNoNode, DenseMatrix(c * val(a)));
        nodes_[id].coeff = c;
        return id;
    }
    NodeId smul(NodeId s, NodeId m) {
        require_scalar(s, "smul");
        return push(Op::Smul, s, m, DenseMatrix(scalar(s) * val(m)));
    }
    NodeId matmul(NodeId a, NodeId b) {
        if (val(a).cols() != val(b).rows()) throw std::invalid_argument("matmul: shape mismatch");
        return push(Op::Matmul, a, b, DenseMatrix(val(a) * val(b)));
    }
    NodeId apply(OperatorId op, NodeId x) {
        const ComplexMatrix& m = table().fwd(op);
        if (m.cols() != val(x).rows()) throw std::invalid_argument("apply: shape mismatch");
        NodeId id = push(Op::Apply, x, kNoNode, spmv(m, val(x)));
        nodes_[id].aux = op;
        return id;
    }
    NodeId trace(NodeId a) {
        if (val(a).rows() != val(a).cols()) throw std::invalid_argument("trace: not square");
        return push(Op::Trace, a, kNoNode, scalar_value(val(a).trace()));
    }
    NodeId transpose(NodeId a) {
        return push(Op::Transpose, a, kNoNode, DenseMatrix(val(a).transpose()));
    }
    NodeId conjugate(NodeId a) {
        return push(Op::Conjugate, a, kNoNode, DenseMatrix(val(a).conjugate()));
    }
    NodeId inner(NodeId u, NodeId v) {
        if (val(u).cols() != 1 || val(v).cols() != 1 || val(u).rows() != val(v).rows())
            throw std::invalid_argument("inner: operands must be equal-length column vectors");
        cxd acc(0.0, 0.0);
        for (Eigen::Index i = 0; i < val(u).rows(); ++i)
            acc += std::conj(val(u)(i, 0)) * val(v)(i, 0);
        return push(Op::Inner, u, v, scalar_value(acc));
    }
    NodeId abs2(NodeId a) {
        return push(Op::Abs2, a, kNoNode, DenseMatrix(val(a).cwiseAbs2().cast<cxd>()));
    }
    NodeId re(NodeId a) { return push(Op::Re, a, kNoNode, DenseMatrix(val(a).real().cast<cxd>())); }
    NodeId im(NodeId a) { return push(Op::Im, a, kNoNode, DenseMatrix(val(a).imag().cast<cxd>())); }
    NodeId norm2(NodeId a) {
        return push(Op::Norm2, a, kNoNode, scalar_value(cxd(val(a).squaredNorm(), 0.0)));
    }
    NodeId norm(NodeId a) {
        return push(Op::Norm, a, kNoNode, scalar_value(cxd(std::sqrt(val(a).squaredNorm()), 0.0)));
    }
    NodeId col(NodeId a, std::int32_t c) {
        if (c < 0 || c >= val(a).cols()) throw std::invalid_argument("col: index out of range");
        NodeId id = push(Op::Col, a, kNoNode, DenseMatrix(val(a).col(c)));
        nodes_[id].aux = c;
        return id;
    }
    NodeId set_col(NodeId a, NodeId column, std::int32_t c) {
        if (c < 0 || c >= val(a).cols()) throw std::invalid_argument("set_col: index out of range");
        if (val(column).cols() != 1 || val(column).rows() != val(a).rows())
            throw std::invalid_argument("set_col: shape mismatch");
        DenseMatrix out = val(a);
        out.col(c) = val(column).col(0);
        NodeId id = push(Op::SetCol, a, column, std::move(out));
        nodes_[id].aux = c;
        return id;
    }

    // Balanced sum of many scalars or same-shape matrices.
    NodeId sum(std::span<const NodeId> xs) {
        if (xs.empty()) throw std::invalid_argument("sum: empty operand list");
        std::vector<NodeId> cur(xs.begin(), xs.end());
        while (cur.size() > 1) {
            std::vector<NodeId> nxt;
            nxt.reserve((cur.size() + 1) / 2);
            for (std::size_t i = 0; i + 1 < cur.size(); i += 2) nxt.push_back(add(cur[i], cur[i + 1]));
            if (cur.size() % 2) nxt.push_back(cur.back());
            cur = std::move(nxt);
        }
        return cur[0];
    }

    // Generic entry point used by tests and by callers that treat op kinds as
    // data. Unknown kinds are rejected.
    NodeId record(Op op, std::span<const NodeId> ins) {
        switch (op) {
            case Op::Add: return add(ins[0], ins[1]);
            case Op::Sub: return sub(ins[0], ins[1]);
            case Op::Mul: return mul(ins[0], ins[1]);
            case Op::Div: return div(ins[0], ins[1]);
            case Op::Exp: return exp_(ins[0]);
            case Op::Sqrt: return sqrt_(ins[0]);
            case Op::Smul: return smul(ins[0], ins[1]);
            case Op::Matmul: return matmul(ins[0], ins[1]);
            case Op::Trace: return trace(ins[0]);
            case Op::Transpose: return transpose(ins[0]);
            case Op::Conjugate: return conjugate(ins[0]);
            case Op::Inner: return inner(ins[0], ins[1]);
            case Op::Abs2: return abs2(ins[0]);
            case Op::Re: return re(ins[0]);
            case Op::Im: return im(ins[0]);
            case Op::Norm2: return norm2(ins[0]);
            case Op::Norm: return norm(ins[0]);
            default: throw std::invalid_argument("record: unknown op-kind");
        }
    }

    // ---- inspection --------------------------------------------------------

    const DenseMatrix& val(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    cxd scalar(NodeId id) const { return val(id)(0, 0); }
    double real(NodeId id) const { return val(id)(0, 0).real(); }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeId>& leaves() const { return leaves_; }
    const OperatorTable& table() const {
        if (!table_) throw std::logic_error("Tape: no operator table attached");
        return *table_;
    }
    OperatorId add_operator(const ComplexMatrix& m) {
        if (!owned_table_) {
            owned_table_ = std::make_shared<OperatorTable>();
            if (table_) throw std::logic_error("Tape: operator table is shared and immutable");
            table_ = owned_table_;
        }
        return owned_table_->add(m);
    }

    // ---- backward ----------------------------------------------------------

    Gradients backward(NodeId cost) const {
        require_real_scalar(cost);
        std::vector<std::pair<NodeId, DenseMatrix>> seeds;
        seeds.emplace_back(cost, scalar_value(cxd(1.0, 0.0)));
        return backward_seeded(seeds);
    }

    // Adjoints accumulated by summation over all paths from the seeded nodes.
    // Seeds are adjoints injected at the given nodes (shape must match).
    Gradients backward_seeded(std::span<const std::pair<NodeId, DenseMatrix>> seeds) const {
        std::vector<DenseMatrix> adj(nodes_.size());
        std::vector<std::uint8_t> touched(nodes_.size(), 0);
        auto bump = [&](NodeId id, const DenseMatrix& g) {
            auto k = static_cast<std::size_t>(id);
            if (!touched[k]) {
                adj[k] = g;
                touched[k] = 1;
            } else {
                adj[k] += g;
            }
        };
        for (const auto& [id, g] : seeds) {
            if (g.rows() != val(id).rows() || g.cols() != val(id).cols())
                throw std::invalid_argument("backward: seed shape mismatch");
            bump(id, g);
        }

        for (std::int64_t i = static_cast<std::int64_t>(nodes_.size()) - 1; i >= 0; --i) {
            if (!touched[static_cast<std::size_t>(i)]) continue;
            const Node& n = nodes_[static_cast<std::size_t>(i)];
            const DenseMatrix& g = adj[static_cast<std::size_t>(i)];
            switch (n.op) {
                case Op::Constant:
                case Op::Leaf: break;
                case Op::Add:
                    bump(n.a, g);
                    bump(n.b, g);
                    break;
                case Op::Sub:
                    bump(n.a, g);
                    bump(n.b, DenseMatrix(-g));
                    break;
                case Op::Mul:
                    bump(n.a, scalar_value(g(0, 0) * std::conj(scalar(n.b))));
                    bump(n.b, scalar_value(g(0, 0) * std::conj(scalar(n.a))));
                    break;
                case Op::Div: {
                    cxd bv = scalar(n.b);
                    bump(n.a, scalar_value(g(0, 0) * std::conj(cxd(1.0, 0.0) / bv)));
                    bump(n.b, scalar_value(g(0, 0) * std::conj(-scalar(n.a) / (bv * bv))));
                    break;
                }
                case Op::Exp: bump(n.a, scalar_value(g(0, 0) * std::conj(n.value(0, 0)))); break;
                case Op::Sqrt:
                    bump(n.a, scalar_value(g(0, 0) * std::conj(cxd(0.5, 0.0) / n.value(0, 0))));
                    break;
                case Op::Scale: bump(n.a, DenseMatrix(std::conj(n.coeff) * g)); break;
                case Op::Smul: {
                    cxd s_adj = (g.array() * val(n.b).array().conjugate()).sum();
                    bump(n.a, scalar_value(s_adj));
                    bump(n.b, DenseMatrix(std::conj(scalar(n.a)) * g));
                    break;
                }
                case Op::Matmul:
                    bump(n.a, DenseMatrix(g * val(n.b).adjoint()));
                    bump(n.b, DenseMatrix(val(n.a).adjoint() * g));
                    break;
                case Op::Apply: bump(n.a, spmv(table().adj(n.aux), g)); break;
                case Op::Trace: {
                    auto d = val(n.a).rows();
                    bump(n.a, DenseMatrix(g(0, 0) * DenseMatrix::Identity(d, d)));
                    break;
                }
                case Op::Transpose: bump(n.a, DenseMatrix(g.transpose())); break;
                case Op::Conjugate: bump(n.a, DenseMatrix(g.conjugate())); break;
                case Op::Inner:
                    bump(n.a, DenseMatrix(std::conj(g(0, 0)) * val(n.b)));
                    bump(n.b, DenseMatrix(g(0, 0) * val(n.a)));
                    break;
                case Op::Abs2:
                    bump(n.a, DenseMatrix((g.real().cast<cxd>().array() * 2.0 * val(n.a).array()).matrix()));
                    break;
                case Op::Re: bump(n.a, DenseMatrix(g.real().cast<cxd>())); break;
                case Op::Im: bump(n.a, DenseMatrix(kImag * g.real().cast<cxd>())); break;
                case Op::Norm2: bump(n.a, DenseMatrix(2.0 * g(0, 0).real() * val(n.a))); break;
                case Op::Norm:
                    bump(n.a, DenseMatrix((g(0, 0).real() / n.value(0, 0).real()) * val(n.a)));
                    break;
                case Op::Col: {
                    DenseMatrix z = DenseMatrix::Zero(val(n.a).rows(), val(n.a).cols());
                    z.col(n.aux) = g.col(0);
                    bump(n.a, z);
                    break;
                }
                case Op::SetCol: {
                    DenseMatrix z = g;
                    z.col(n.aux).setZero();
                    bump(n.a, z);
                    bump(n.b, DenseMatrix(g.col(n.aux)));
                    break;
                }
            }
        }

        std::unordered_map<NodeId, DenseMatrix> out;
        out.reserve(leaves_.size());
        for (NodeId l : leaves_) {
            auto k = static_cast<std::size_t>(l);
            out.emplace(l, touched[k] ? adj[k] : DenseMatrix::Zero(val(l).rows(), val(l).cols()));
        }
        return Gradients(std::move(out));
    }

    // Re-evaluates the recorded graph with one leaf overridden; used by the
    // finite-difference harness. The graph structure (including run-time
    // branch choices already baked in) is fixed.
    double replay_real(NodeId out_node, NodeId leaf_id, const DenseMatrix& leaf_value) const {
        std::vector<DenseMatrix> v(static_cast<std::size_t>(out_node) + 1);
        for (std::size_t i = 0; i <= static_cast<std::size_t>(out_node); ++i) {
            const Node& n = nodes_[i];
            if (static_cast<NodeId>(i) == leaf_id) {
                v[i] = leaf_value;
                continue;
            }
            switch (n.op) {
                case Op::Constant:
                case Op::Leaf: v[i] = n.value; break;
                case Op::Add: v[i] = v[n.a] + v[n.b]; break;
                case Op::Sub: v[i] = v[n.a] - v[n.b]; break;
                case Op::Mul: v[i] = scalar_value(v[n.a](0, 0) * v[n.b](0, 0)); break;
                case Op::Div: v[i] = scalar_value(v[n.a](0, 0) / v[n.b](0, 0)); break;
                case Op::Exp: v[i] = scalar_value(std::exp(v[n.a](0, 0))); break;
                case Op::Sqrt: v[i] = scalar_value(std::sqrt(v[n.a](0, 0))); break;
                case Op::Scale: v[i] = n.coeff * v[n.a]; break;
                case Op::Smul: v[i] = v[n.a](0, 0) * v[n.b]; break;
                case Op::Matmul: v[i] = v[n.a] * v[n.b]; break;
                case Op::Apply: v[i] = spmv(table().fwd(n.aux), v[n.a]); break;
                case Op::Trace: v[i] = scalar_value(v[n.a].trace()); break;
                case Op::Transpose: v[i] = v[n.a].transpose(); break;
                case Op::Conjugate: v[i] = v[n.a].conjugate(); break;
                case Op::Inner: {
                    cxd acc(0.0, 0.0);
                    for (Eigen::Index r = 0; r < v[n.a].rows(); ++r)
                        acc += std::conj(v[n.a](r, 0)) * v[n.b](r, 0);
                    v[i] = scalar_value(acc);
                    break;
                }
                case Op::Abs2: v[i] = v[n.a].cwiseAbs2().cast<cxd>(); break;
                case Op::Re: v[i] = v[n.a].real().cast<cxd>(); break;
                case Op::Im: v[i] = v[n.a].imag().cast<cxd>(); break;
                case Op::Norm2: v[i] = scalar_value(cxd(v[n.a].squaredNorm(), 0.0)); break;
                case Op::Norm: v[i] = scalar_value(cxd(std::sqrt(v[n.a].squaredNorm()), 0.0)); break;
                case Op::Col: v[i] = v[n.a].col(n.aux); break;
                case Op::SetCol:
                    v[i] = v[n.a];
                    v[i].col(n.aux) = v[n.b].col(0);
                    break;
            }
        }
        return v[static_cast<std::size_t>(out_node)](0, 0).real();
    }

    void require_real_scalar(NodeId cost) const {
        const DenseMatrix& c = val(cost);
        if (c.rows() != 1 || c.cols() != 1 ||
            std::abs(c(0, 0).imag()) > 1e-9 * (1.0 + std::abs(c(0, 0).real())))
            throw non_scalar_cost("backward: cost node is not a real scalar");
    }

private:
    static DenseMatrix scalar_value(cxd z) {
        DenseMatrix m(1, 1);
        m(0, 0) = z;
        return m;
    }
    void require_scalar(NodeId id, const char* who) const {
        if (val(id).rows() != 1 || val(id).cols() != 1)
            throw std::invalid_argument(std::string(who) + ": scalar operand required");
    }
    void require_same_shape(NodeId a, NodeId b, const char* who) const {
        if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
            throw std::invalid_argument(std::string(who) + ": shape mismatch");
    }
    NodeId push(Op op, NodeId a, NodeId b, DenseMatrix value) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::vector<NodeId> leaves_;
    std::shared_ptr<const OperatorTable> table_;
    std::shared_ptr<OperatorTable> owned_table_;
};

// Central finite differences on every component of every leaf (real and
// imaginary parts independently) against the reverse-mode adjoints. Returns
// the worst relative error.
inline double gradient_check(const Tape& tape, NodeId cost, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("gradient_check: step must be > 0");
    tape.require_real_scalar(cost);
    Gradients grads = tape.backward(cost);
    double worst = 0.0;
    for (NodeId l : tape.leaves()) {
        if (l > cost) continue;  // leaf recorded after the cost: no dependence
        const DenseMatrix& base = tape.val(l);
        const DenseMatrix& analytic = grads.at(l);
        for (Eigen::Index i = 0; i < base.rows(); ++i) {
            for (Eigen::Index j = 0; j < base.cols(); ++j) {
                for (int part = 0; part < 2; ++part) {
                    cxd delta = part == 0 ? cxd(step, 0.0) : cxd(0.0, step);
                    DenseMatrix up = base, dn = base;
                    up(i, j) += delta;
                    dn(i, j) -= delta;
                    double fd = (tape.replay_real(cost, l, up) - tape.replay_real(cost, l, dn)) /
                                (2.0 * step);
                    double an = part == 0 ? analytic(i, j).real() : analytic(i, j).imag();
                    double denom = std::max({std::abs(an), std::abs(fd), 1e-10});
                    worst = std::max(worst, std::abs(an - fd) / denom);
                }
            }
        }
    }
    return worst;
}

}  // namespace qtoc
