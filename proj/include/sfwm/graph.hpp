#ifndef SFWM_GRAPH_HPP
#define SFWM_GRAPH_HPP

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sfwm/common.hpp"
#include "sfwm/mat.hpp"

namespace sfwm {

// Reverse-mode tape over a fixed primitive set. Every op computes its value
// eagerly, records a backward closure, and rejects non-finite results so a
// numeric blowup is reported at the node that produced it. The primitive set
// is deliberately closed: everything trainable in this repo composes from it.
//
// Instantiated with T = float for training and T = double for the
// finite-difference verification mode.
template <typename T>
class Graph {
public:
    struct Var {
        int id = -1;
    };

    struct Node {
        Mat<T> val;
        Mat<T> grad;
        std::function<void(Graph&, const Node&)> back;  // empty for leaves
        const char* op = "leaf";
        std::string pname;  // non-empty for parameter leaves
        bool needs_grad = false;
    };

    std::vector<Node> nodes;

    Var input(Mat<T> value) { return push(std::move(value), "leaf", false, nullptr); }

    Var param(const std::string& name, Mat<T> value) {
        Var v = push(std::move(value), "param", true, nullptr);
        nodes[v.id].pname = name;
        return v;
    }

    const Mat<T>& value(Var v) const { return nodes[v.id].val; }
    int64_t rows(Var v) const { return nodes[v.id].val.rows; }
    int64_t cols(Var v) const { return nodes[v.id].val.cols; }

    // ---- primitives -------------------------------------------------------

    Var matmul_op(Var a, Var b) {
        const Mat<T>&A = val(a), &B = val(b);
        Mat<T> out = matmul(A, B);
        return push(std::move(out), "matmul", needs(a) || needs(b), [=](Graph& g, const Node& n) {
            if (g.needs(a)) gemm_nt_acc(g.gradref(a), n.grad, g.val(b));
            if (g.needs(b)) gemm_tn_acc(g.gradref(b), g.val(a), n.grad);
        });
    }

    Var transpose_op(Var a) {
        Mat<T> out = transposed(val(a));
        return push(std::move(out), "transpose", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            for (int64_t i = 0; i < n.grad.rows; ++i)
                for (int64_t j = 0; j < n.grad.cols; ++j) ga.at(j, i) += n.grad.at(i, j);
        });
    }

    Var add(Var a, Var b) {
        const Mat<T>&A = val(a), &B = val(b);
        if (!A.same_shape(B)) throw NumericError("add: shape mismatch");
        Mat<T> out = A;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += B.v[i];
        return push(std::move(out), "add", needs(a) || needs(b), [=](Graph& g, const Node& n) {
            if (g.needs(a)) add_inplace(g.gradref(a), n.grad);
            if (g.needs(b)) add_inplace(g.gradref(b), n.grad);
        });
    }

    Var sub(Var a, Var b) {
        const Mat<T>&A = val(a), &B = val(b);
        if (!A.same_shape(B)) throw NumericError("sub: shape mismatch");
        Mat<T> out = A;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= B.v[i];
        return push(std::move(out), "sub", needs(a) || needs(b), [=](Graph& g, const Node& n) {
            if (g.needs(a)) add_inplace(g.gradref(a), n.grad);
            if (g.needs(b)) {
                Mat<T>& gb = g.gradref(b);
                for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] -= n.grad.v[i];
            }
        });
    }

    Var mul(Var a, Var b) {
        const Mat<T>&A = val(a), &B = val(b);
        if (!A.same_shape(B)) throw NumericError("mul: shape mismatch");
        Mat<T> out = A;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= B.v[i];
        return push(std::move(out), "mul", needs(a) || needs(b), [=](Graph& g, const Node& n) {
            if (g.needs(a)) {
                Mat<T>& ga = g.gradref(a);
                const Mat<T>& bv = g.val(b);
                for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += n.grad.v[i] * bv.v[i];
            }
            if (g.needs(b)) {
                Mat<T>& gb = g.gradref(b);
                const Mat<T>& av = g.val(a);
                for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += n.grad.v[i] * av.v[i];
            }
        });
    }

    // a[m x n] + row vector b[1 x n] broadcast over rows (bias add).
    Var add_rowvec(Var a, Var b) {
        const Mat<T>&A = val(a), &B = val(b);
        if (B.rows != 1 || B.cols != A.cols) throw NumericError("add_rowvec: shape mismatch");
        Mat<T> out = A;
        for (int64_t i = 0; i < A.rows; ++i)
            for (int64_t j = 0; j < A.cols; ++j) out.at(i, j) += B.v[static_cast<size_t>(j)];
        return push(std::move(out), "add_rowvec", needs(a) || needs(b), [=](Graph& g, const Node& n) {
            if (g.needs(a)) add_inplace(g.gradref(a), n.grad);
            if (g.needs(b)) {
                Mat<T>& gb = g.gradref(b);
                for (int64_t i = 0; i < n.grad.rows; ++i)
                    for (int64_t j = 0; j < n.grad.cols; ++j) gb.v[static_cast<size_t>(j)] += n.grad.at(i, j);
            }
        });
    }

    // a[m x n] * row vector b[1 x n] broadcast over rows (per-channel gain).
    Var mul_rowvec(Var a, Var b) {
        const Mat<T>&A = val(a), &B = val(b);
        if (B.rows != 1 || B.cols != A.cols) throw NumericError("mul_rowvec: shape mismatch");
        Mat<T> out = A;
        for (int64_t i = 0; i < A.rows; ++i)
            for (int64_t j = 0; j < A.cols; ++j) out.at(i, j) *= B.v[static_cast<size_t>(j)];
        return push(std::move(out), "mul_rowvec", needs(a) || needs(b), [=](Graph& g, const Node& n) {
            const Mat<T>&A2 = g.val(a), &B2 = g.val(b);
            if (g.needs(a)) {
                Mat<T>& ga = g.gradref(a);
                for (int64_t i = 0; i < A2.rows; ++i)
                    for (int64_t j = 0; j < A2.cols; ++j)
                        ga.at(i, j) += n.grad.at(i, j) * B2.v[static_cast<size_t>(j)];
            }
            if (g.needs(b)) {
                Mat<T>& gb = g.gradref(b);
                for (int64_t i = 0; i < A2.rows; ++i)
                    for (int64_t j = 0; j < A2.cols; ++j)
                        gb.v[static_cast<size_t>(j)] += n.grad.at(i, j) * A2.at(i, j);
            }
        });
    }

    // Row vector a[1 x n] stacked m times.
    Var repeat_rows(Var a, int64_t m) {
        const Mat<T>& A = val(a);
        if (A.rows != 1) throw NumericError("repeat_rows: expects a row vector");
        Mat<T> out(m, A.cols);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < A.cols; ++j) out.at(i, j) = A.v[static_cast<size_t>(j)];
        return push(std::move(out), "repeat_rows", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            for (int64_t i = 0; i < n.grad.rows; ++i)
                for (int64_t j = 0; j < n.grad.cols; ++j) ga.v[static_cast<size_t>(j)] += n.grad.at(i, j);
        });
    }

    // Column-wise mean over rows -> [1 x n].
    Var mean_rows(Var a) {
        const Mat<T>& A = val(a);
        if (A.rows < 1) throw NumericError("mean_rows: empty input");
        Mat<T> out(1, A.cols);
        for (int64_t i = 0; i < A.rows; ++i)
            for (int64_t j = 0; j < A.cols; ++j) out.v[static_cast<size_t>(j)] += A.at(i, j);
        const T inv = T(1) / static_cast<T>(A.rows);
        for (auto& x : out.v) x *= inv;
        const int64_t m = A.rows;
        return push(std::move(out), "mean_rows", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            const T inv2 = T(1) / static_cast<T>(m);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < ga.cols; ++j) ga.at(i, j) += n.grad.v[static_cast<size_t>(j)] * inv2;
        });
    }

    Var scale(Var a, double c) {
        Mat<T> out = val(a);
        for (auto& x : out.v) x = static_cast<T>(x * c);
        return push(std::move(out), "scale", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += static_cast<T>(n.grad.v[i] * c);
        });
    }

    Var add_const(Var a, double c) {
        Mat<T> out = val(a);
        for (auto& x : out.v) x = static_cast<T>(x + c);
        return push(std::move(out), "add_const", needs(a), [=](Graph& g, const Node& n) {
            if (g.needs(a)) add_inplace(g.gradref(a), n.grad);
        });
    }

    Var tanh_op(Var a) {
        Mat<T> out = val(a);
        for (auto& x : out.v) x = std::tanh(x);
        return push(std::move(out), "tanh", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            for (size_t i = 0; i < ga.v.size(); ++i) {
                const T y = n.val.v[i];
                ga.v[i] += n.grad.v[i] * (T(1) - y * y);
            }
        });
    }

    // Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
    Var gelu(Var a) {
        const Mat<T>& A = val(a);
        Mat<T> out = A;
        for (auto& x : out.v) {
            const double xd = static_cast<double>(x);
            x = static_cast<T>(0.5 * xd * (1.0 + std::erf(xd * 0.7071067811865476)));
        }
        return push(std::move(out), "gelu", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            const Mat<T>& av = g.val(a);
            for (size_t i = 0; i < ga.v.size(); ++i) {
                const double x = static_cast<double>(av.v[i]);
                const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
                const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
                ga.v[i] += static_cast<T>(static_cast<double>(n.grad.v[i]) * (cdf + x * pdf));
            }
        });
    }

    Var sigmoid(Var a) {
        Mat<T> out = val(a);
        for (auto& x : out.v) x = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
        return push(std::move(out), "sigmoid", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            for (size_t i = 0; i < ga.v.size(); ++i) {
                const T y = n.val.v[i];
                ga.v[i] += n.grad.v[i] * y * (T(1) - y);
            }
        });
    }

    Var silu(Var a) {
        const Mat<T>& A = val(a);
        Mat<T> out = A;
        for (auto& x : out.v) {
            const double xd = static_cast<double>(x);
            x = static_cast<T>(xd / (1.0 + std::exp(-xd)));
        }
        return push(std::move(out), "silu", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            const Mat<T>& av = g.val(a);
            for (size_t i = 0; i < ga.v.size(); ++i) {
                const double x = static_cast<double>(av.v[i]);
                const double s = 1.0 / (1.0 + std::exp(-x));
                ga.v[i] += static_cast<T>(static_cast<double>(n.grad.v[i]) * (s * (1.0 + x * (1.0 - s))));
            }
        });
    }

    // Row-wise softmax.
    Var softmax(Var a) {
        const Mat<T>& A = val(a);
        Mat<T> out = A;
        for (int64_t i = 0; i < A.rows; ++i) {
            T* r = out.row(i);
            T mx = r[0];
            for (int64_t j = 1; j < A.cols; ++j) mx = std::max(mx, r[j]);
            double sum = 0.0;
            for (int64_t j = 0; j < A.cols; ++j) {
                const double e = std::exp(static_cast<double>(r[j] - mx));
                r[j] = static_cast<T>(e);
                sum += e;
            }
            const T inv = static_cast<T>(1.0 / sum);
            for (int64_t j = 0; j < A.cols; ++j) r[j] *= inv;
        }
        return push(std::move(out), "softmax", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            for (int64_t i = 0; i < n.val.rows; ++i) {
                const T* y = n.val.row(i);
                const T* gy = n.grad.row(i);
                double dot = 0.0;
                for (int64_t j = 0; j < n.val.cols; ++j) dot += static_cast<double>(gy[j]) * y[j];
                T* gx = ga.row(i);
                for (int64_t j = 0; j < n.val.cols; ++j)
                    gx[j] += static_cast<T>(y[j] * (static_cast<double>(gy[j]) - dot));
            }
        });
    }

    // Row-wise standardization: (x - mean) / sqrt(var + eps), no affine.
    Var layer_norm(Var a, double eps = 1e-5) {
        const Mat<T>& A = val(a);
        Mat<T> out(A.rows, A.cols);
        std::vector<double> inv_std(static_cast<size_t>(A.rows));
        for (int64_t i = 0; i < A.rows; ++i) {
            const T* x = A.row(i);
            double mean = 0.0;
            for (int64_t j = 0; j < A.cols; ++j) mean += x[j];
            mean /= static_cast<double>(A.cols);
            double var = 0.0;
            for (int64_t j = 0; j < A.cols; ++j) {
                const double d = x[j] - mean;
                var += d * d;
            }
            var /= static_cast<double>(A.cols);
            const double s = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(i)] = s;
            T* y = out.row(i);
            for (int64_t j = 0; j < A.cols; ++j) y[j] = static_cast<T>((x[j] - mean) * s);
        }
        return push(std::move(out), "layer_norm", needs(a),
                    [=, inv = std::move(inv_std)](Graph& g, const Node& n) {
                        if (!g.needs(a)) return;
                        Mat<T>& ga = g.gradref(a);
                        const int64_t nc = n.val.cols;
                        for (int64_t i = 0; i < n.val.rows; ++i) {
                            const T* y = n.val.row(i);
                            const T* gy = n.grad.row(i);
                            double gmean = 0.0, gymean = 0.0;
                            for (int64_t j = 0; j < nc; ++j) {
                                gmean += gy[j];
                                gymean += static_cast<double>(gy[j]) * y[j];
                            }
                            gmean /= static_cast<double>(nc);
                            gymean /= static_cast<double>(nc);
                            const double s = inv[static_cast<size_t>(i)];
                            T* gx = ga.row(i);
                            for (int64_t j = 0; j < nc; ++j)
                                gx[j] += static_cast<T>(s * (static_cast<double>(gy[j]) - gmean - y[j] * gymean));
                        }
                    });
    }

    Var slice_rows(Var a, int64_t r0, int64_t r1) {
        const Mat<T>& A = val(a);
        if (r0 < 0 || r1 > A.rows || r0 >= r1) throw NumericError("slice_rows: bad range");
        Mat<T> out = take_rows(A, r0, r1);
        return push(std::move(out), "slice_rows", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            for (int64_t i = 0; i < n.grad.rows; ++i)
                for (int64_t j = 0; j < n.grad.cols; ++j) ga.at(r0 + i, j) += n.grad.at(i, j);
        });
    }

    Var slice_cols(Var a, int64_t c0, int64_t c1) {
        const Mat<T>& A = val(a);
        if (c0 < 0 || c1 > A.cols || c0 >= c1) throw NumericError("slice_cols: bad range");
        Mat<T> out(A.rows, c1 - c0);
        for (int64_t i = 0; i < A.rows; ++i)
            for (int64_t j = c0; j < c1; ++j) out.at(i, j - c0) = A.at(i, j);
        return push(std::move(out), "slice_cols", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            for (int64_t i = 0; i < n.grad.rows; ++i)
                for (int64_t j = 0; j < n.grad.cols; ++j) ga.at(i, c0 + j) += n.grad.at(i, j);
        });
    }

    Var concat_rows(Var a, Var b) {
        const Mat<T>&A = val(a), &B = val(b);
        Mat<T> out = vstack(A, B);
        const int64_t ar = A.rows;
        return push(std::move(out), "concat_rows", needs(a) || needs(b), [=](Graph& g, const Node& n) {
            if (g.needs(a)) {
                Mat<T>& ga = g.gradref(a);
                for (int64_t i = 0; i < ar; ++i)
                    for (int64_t j = 0; j < n.grad.cols; ++j) ga.at(i, j) += n.grad.at(i, j);
            }
            if (g.needs(b)) {
                Mat<T>& gb = g.gradref(b);
                for (int64_t i = ar; i < n.grad.rows; ++i)
                    for (int64_t j = 0; j < n.grad.cols; ++j) gb.at(i - ar, j) += n.grad.at(i, j);
            }
        });
    }

    Var concat_cols(Var a, Var b) {
        const Mat<T>&A = val(a), &B = val(b);
        if (A.rows != B.rows) throw NumericError("concat_cols: row mismatch");
        Mat<T> out(A.rows, A.cols + B.cols);
        for (int64_t i = 0; i < A.rows; ++i) {
            for (int64_t j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j);
            for (int64_t j = 0; j < B.cols; ++j) out.at(i, A.cols + j) = B.at(i, j);
        }
        const int64_t ac = A.cols;
        return push(std::move(out), "concat_cols", needs(a) || needs(b), [=](Graph& g, const Node& n) {
            if (g.needs(a)) {
                Mat<T>& ga = g.gradref(a);
                for (int64_t i = 0; i < n.grad.rows; ++i)
                    for (int64_t j = 0; j < ac; ++j) ga.at(i, j) += n.grad.at(i, j);
            }
            if (g.needs(b)) {
                Mat<T>& gb = g.gradref(b);
                for (int64_t i = 0; i < n.grad.rows; ++i)
                    for (int64_t j = ac; j < n.grad.cols; ++j) gb.at(i, j - ac) += n.grad.at(i, j);
            }
        });
    }

    // Mean of squared entries -> 1x1.
    Var mean_sq(Var a) {
        const Mat<T>& A = val(a);
        double acc = 0.0;
        for (const T& x : A.v) acc += static_cast<double>(x) * static_cast<double>(x);
        const double n_elems = static_cast<double>(A.v.size());
        Mat<T> out = Mat<T>::scalar(static_cast<T>(acc / n_elems));
        return push(std::move(out), "mean_sq", needs(a), [=](Graph& g, const Node& n) {
            if (!g.needs(a)) return;
            Mat<T>& ga = g.gradref(a);
            const Mat<T>& av = g.val(a);
            const T c = static_cast<T>(2.0 / n_elems * static_cast<double>(n.grad.v[0]));
            for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += c * av.v[i];
        });
    }

    // ---- execution --------------------------------------------------------

    // Reverse sweep from a scalar node; fills parameter gradients.
    void backward(Var loss) {
        Node& ln = nodes[loss.id];
        if (ln.val.rows != 1 || ln.val.cols != 1) throw NumericError("backward: loss must be scalar");
        for (auto& n : nodes) {
            if (n.needs_grad && n.grad.v.empty()) n.grad = Mat<T>(n.val.rows, n.val.cols);
        }
        if (!ln.needs_grad) return;  // loss independent of every parameter
        ln.grad.v[0] = T(1);
        for (int64_t i = static_cast<int64_t>(nodes.size()) - 1; i >= 0; --i) {
            Node& n = nodes[static_cast<size_t>(i)];
            if (n.needs_grad && n.back) n.back(*this, n);
        }
    }

    // Parameter-name -> gradient. Parameters appearing several times in the
    // graph are registered once per appearance; their grads are summed here.
    std::map<std::string, Mat<T>> collect_grads() const {
        std::map<std::string, Mat<T>> out;
        for (const auto& n : nodes) {
            if (n.pname.empty()) continue;
            auto it = out.find(n.pname);
            if (it == out.end()) {
                Mat<T> g = n.grad.v.empty() ? Mat<T>(n.val.rows, n.val.cols) : n.grad;
                out.emplace(n.pname, std::move(g));
            } else if (!n.grad.v.empty()) {
                add_inplace(it->second, n.grad);
            }
        }
        return out;
    }

    const Mat<T>& val(Var v) const { return nodes[v.id].val; }
    Mat<T>& gradref(Var v) { return nodes[v.id].grad; }
    bool needs(Var v) const { return nodes[v.id].needs_grad; }

private:
    Var push(Mat<T>&& value, const char* op, bool needs_grad,
             std::function<void(Graph&, const Node&)> back) {
        if (!all_finite(value))
            throw NumericError(std::string("non-finite value produced by op '") + op + "'");
        Node n;
        n.val = std::move(value);
        n.back = std::move(back);
        n.op = op;
        n.needs_grad = needs_grad;
        nodes.push_back(std::move(n));
        return Var{static_cast<int>(nodes.size()) - 1};
    }
};

}  // namespace sfwm

#endif
