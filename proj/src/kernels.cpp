#include "sleepnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sleepnet {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* where) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i])) {
            throw Error(ErrorCode::NonFinite, std::string("non-finite value produced by ") + where);
        }
    }
}

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

void expect_rank(const char* op, const Shape& s, std::size_t rank, const char* what) {
    if (s.size() != rank) {
        shape_error(op, std::string(what) + " has shape " + shape_string(s) + ", expected rank " +
                            std::to_string(rank));
    }
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& in, const Tensor<T>& weights, const Tensor<T>& bias, std::size_t stride) {
    expect_rank("conv1d", in.shape(), 2, "input");
    expect_rank("conv1d", weights.shape(), 3, "weights");
    expect_rank("conv1d", bias.shape(), 1, "bias");
    const std::size_t length = in.dim(0), cin = in.dim(1);
    const std::size_t kernel = weights.dim(0), cout = weights.dim(2);
    if (weights.dim(1) != cin || bias.dim(0) != cout) {
        shape_error("conv1d", "input " + shape_string(in.shape()) + " weights " + shape_string(weights.shape()) +
                                  " bias " + shape_string(bias.shape()));
    }
    if (stride < 1) throw Error(ErrorCode::InvalidArgument, "conv1d: stride must be >= 1");
    if (length < kernel) {
        shape_error("conv1d", "input length " + std::to_string(length) + " shorter than kernel " +
                                  std::to_string(kernel));
    }

    const std::size_t lout = conv_output_length(length, kernel, stride);
    Tensor<T> out({lout, cout});
    const T* x = in.data();
    const T* w = weights.data();
    for (std::size_t t = 0; t < lout; ++t) {
        T* o = out.data() + t * cout;
        std::copy(bias.data(), bias.data() + cout, o);
        const T* window = x + t * stride * cin;
        for (std::size_t kc = 0; kc < kernel * cin; ++kc) {
            const T v = window[kc];
            const T* wrow = w + kc * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += v * wrow[co];
        }
    }
    require_finite(out, "conv1d");
    return out;
}

template <typename T>
void conv1d_backward(const Tensor<T>& in, const Tensor<T>& weights, std::size_t stride,
                     const Tensor<T>& dout, Tensor<T>* din, Tensor<T>& dweights, Tensor<T>& dbias) {
    const std::size_t cin = in.dim(1);
    const std::size_t kernel = weights.dim(0), cout = weights.dim(2);
    const std::size_t lout = dout.dim(0);
    if (dout.dim(1) != cout || lout != conv_output_length(in.dim(0), kernel, stride) ||
        dweights.shape() != weights.shape() || dbias.size() != cout) {
        shape_error("conv1d_backward", "gradient shapes do not match the forward pass");
    }
    if (din) *din = Tensor<T>(in.shape());

    const T* x = in.data();
    const T* w = weights.data();
    T* dw = dweights.data();
    for (std::size_t t = 0; t < lout; ++t) {
        const T* g = dout.data() + t * cout;
        for (std::size_t co = 0; co < cout; ++co) dbias[co] += g[co];
        const T* window = x + t * stride * cin;
        T* dwindow = din ? din->data() + t * stride * cin : nullptr;
        for (std::size_t kc = 0; kc < kernel * cin; ++kc) {
            const T v = window[kc];
            T* dwrow = dw + kc * cout;
            const T* wrow = w + kc * cout;
            T acc = 0;
            for (std::size_t co = 0; co < cout; ++co) {
                dwrow[co] += v * g[co];
                acc += wrow[co] * g[co];
            }
            if (dwindow) dwindow[kc] += acc;
        }
    }
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    expect_rank("dense", weights.shape(), 2, "weights");
    expect_rank("dense", bias.shape(), 1, "bias");
    if (x.rank() != 1 && x.rank() != 2) shape_error("dense", "input must be rank 1 or 2");
    const std::size_t n = weights.dim(0), m = weights.dim(1);
    const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
    const std::size_t cols = x.rank() == 1 ? x.dim(0) : x.dim(1);
    if (cols != n || bias.dim(0) != m) {
        shape_error("dense", "input " + shape_string(x.shape()) + " weights " + shape_string(weights.shape()) +
                                 " bias " + shape_string(bias.shape()));
    }
    Tensor<T> out(x.rank() == 1 ? Shape{m} : Shape{rows, m});
    for (std::size_t r = 0; r < rows; ++r) {
        T* o = out.data() + r * m;
        std::copy(bias.data(), bias.data() + m, o);
        const T* xr = x.data() + r * n;
        for (std::size_t i = 0; i < n; ++i) {
            const T v = xr[i];
            const T* wrow = weights.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += v * wrow[j];
        }
    }
    require_finite(out, "dense");
    return out;
}

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dout,
                    Tensor<T>* dx, Tensor<T>& dweights, Tensor<T>& dbias) {
    const std::size_t n = weights.dim(0), m = weights.dim(1);
    const std::size_t rows = x.size() / n;
    if (dout.size() != rows * m || dweights.shape() != weights.shape() || dbias.size() != m) {
        shape_error("dense_backward", "gradient shapes do not match the forward pass");
    }
    if (dx) *dx = Tensor<T>(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* g = dout.data() + r * m;
        const T* xr = x.data() + r * n;
        for (std::size_t j = 0; j < m; ++j) dbias[j] += g[j];
        for (std::size_t i = 0; i < n; ++i) {
            const T v = xr[i];
            T* dwrow = dweights.data() + i * m;
            const T* wrow = weights.data() + i * m;
            T acc = 0;
            for (std::size_t j = 0; j < m; ++j) {
                dwrow[j] += v * g[j];
                acc += wrow[j] * g[j];
            }
            if (dx) (*dx)[r * n + i] = acc;
        }
    }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (auto& v : out.values()) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dout) {
    if (x.shape() != dout.shape()) shape_error("relu_backward", "shape mismatch");
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dout[i] : T(0);
    return dx;
}

template <typename T>
std::vector<T> softmax(std::span<const T> x) {
    if (x.empty()) throw Error(ErrorCode::ShapeMismatch, "softmax of an empty vector");
    const T peak = *std::max_element(x.begin(), x.end());
    std::vector<T> out(x.size());
    T sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - peak);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                     LayerNormCache<T>* cache) {
    expect_rank("layer_norm", x.shape(), 2, "input");
    const std::size_t rows = x.dim(0), d = x.dim(1);
    if (d < 2) shape_error("layer_norm", "feature dimension must be at least 2");
    if (gain.size() != d || shift.size() != d) shape_error("layer_norm", "gain/shift length mismatch");

    Tensor<T> out(x.shape());
    if (cache) {
        cache->normalized = Tensor<T>(x.shape());
        cache->rstd.assign(rows, T(0));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * d;
        T mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<T>(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<T>(d);
        const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEpsilon));
        for (std::size_t j = 0; j < d; ++j) {
            const T xhat = (xr[j] - mean) * rstd;
            out[r * d + j] = gain[j] * xhat + shift[j];
            if (cache) cache->normalized[r * d + j] = xhat;
        }
        if (cache) cache->rstd[r] = rstd;
    }
    require_finite(out, "layer_norm");
    return out;
}

template <typename T>
void layer_norm_backward(const LayerNormCache<T>& cache, const Tensor<T>& gain, const Tensor<T>& dout,
                         Tensor<T>& dx, Tensor<T>& dgain, Tensor<T>& dshift) {
    const std::size_t rows = cache.normalized.dim(0), d = cache.normalized.dim(1);
    if (dout.shape() != cache.normalized.shape()) shape_error("layer_norm_backward", "shape mismatch");
    dx = Tensor<T>(dout.shape());
    std::vector<T> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* g = dout.data() + r * d;
        const T* xhat = cache.normalized.data() + r * d;
        T mean_d = 0, mean_dx = 0;
        for (std::size_t j = 0; j < d; ++j) {
            dgain[j] += g[j] * xhat[j];
            dshift[j] += g[j];
            dxhat[j] = g[j] * gain[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[j];
        }
        mean_d /= static_cast<T>(d);
        mean_dx /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
            dx[r * d + j] = cache.rstd[r] * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
    }
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p, std::size_t heads,
                               AttentionCache<T>* cache) {
    expect_rank("multi_head_attention", x.shape(), 2, "input");
    const std::size_t steps = x.dim(0), d = x.dim(1);
    if (heads == 0 || d % heads != 0) {
        throw Error(ErrorCode::InvalidArgument, "multi_head_attention: model width " + std::to_string(d) +
                                                    " not divisible by " + std::to_string(heads) + " heads");
    }
    const std::size_t dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Tensor<T> q = dense(x, p.wq, p.bq);
    Tensor<T> k = dense(x, p.wk, p.bk);
    Tensor<T> v = dense(x, p.wv, p.bv);
    if (q.shape() != x.shape()) shape_error("multi_head_attention", "projections must be square");

    Tensor<T> weights({heads, steps, steps});
    Tensor<T> context({steps, d});
    std::vector<T> scores(steps);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t t = 0; t < steps; ++t) {
            const T* qt = q.data() + t * d + off;
            for (std::size_t u = 0; u < steps; ++u) {
                const T* ku = k.data() + u * d + off;
                T dot = 0;
                for (std::size_t j = 0; j < dh; ++j) dot += qt[j] * ku[j];
                scores[u] = dot * scale;
            }
            const auto row = softmax<T>(scores);
            T* wrow = weights.data() + (h * steps + t) * steps;
            std::copy(row.begin(), row.end(), wrow);
            T* ct = context.data() + t * d + off;
            for (std::size_t u = 0; u < steps; ++u) {
                const T a = wrow[u];
                const T* vu = v.data() + u * d + off;
                for (std::size_t j = 0; j < dh; ++j) ct[j] += a * vu[j];
            }
        }
    }

    Tensor<T> out = dense(context, p.wo, p.bo);
    if (cache) {
        cache->input = x;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->weights = std::move(weights);
        cache->context = std::move(context);
    }
    require_finite(out, "multi_head_attention");
    return out;
}

template <typename T>
void multi_head_attention_backward(const AttentionCache<T>& cache, const AttentionParams<T>& p,
                                   std::size_t heads, const Tensor<T>& dout, Tensor<T>& dx,
                                   const AttentionGrads<T>& grads) {
    const std::size_t steps = cache.input.dim(0), d = cache.input.dim(1);
    const std::size_t dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Tensor<T> dcontext;
    dense_backward(cache.context, p.wo, dout, &dcontext, grads.wo, grads.bo);

    Tensor<T> dq({steps, d}), dk({steps, d}), dv({steps, d});
    std::vector<T> dweights(steps), dscores(steps);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t t = 0; t < steps; ++t) {
            const T* wrow = cache.weights.data() + (h * steps + t) * steps;
            const T* gt = dcontext.data() + t * d + off;
            T weighted = 0;
            for (std::size_t u = 0; u < steps; ++u) {
                const T* vu = cache.v.data() + u * d + off;
                T* dvu = dv.data() + u * d + off;
                T dot = 0;
                for (std::size_t j = 0; j < dh; ++j) {
                    dot += gt[j] * vu[j];
                    dvu[j] += wrow[u] * gt[j];
                }
                dweights[u] = dot;
                weighted += wrow[u] * dot;
            }
            for (std::size_t u = 0; u < steps; ++u) dscores[u] = wrow[u] * (dweights[u] - weighted) * scale;

            const T* qt = cache.q.data() + t * d + off;
            T* dqt = dq.data() + t * d + off;
            for (std::size_t u = 0; u < steps; ++u) {
                const T s = dscores[u];
                const T* ku = cache.k.data() + u * d + off;
                T* dku = dk.data() + u * d + off;
                for (std::size_t j = 0; j < dh; ++j) {
                    dqt[j] += s * ku[j];
                    dku[j] += s * qt[j];
                }
            }
        }
    }

    Tensor<T> dx_q, dx_k, dx_v;
    dense_backward(cache.input, p.wq, dq, &dx_q, grads.wq, grads.bq);
    dense_backward(cache.input, p.wk, dk, &dx_k, grads.wk, grads.bk);
    dense_backward(cache.input, p.wv, dv, &dx_v, grads.wv, grads.bv);
    dx = std::move(dx_q);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_k[i] + dx_v[i];
}

#define SLEEPNET_INSTANTIATE_KERNELS(T)                                                                        \
    template void require_finite<T>(const Tensor<T>&, const char*);                                           \
    template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);          \
    template void conv1d_backward<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, const Tensor<T>&,       \
                                     Tensor<T>*, Tensor<T>&, Tensor<T>&);                                     \
    template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template void dense_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,         \
                                    Tensor<T>&, Tensor<T>&);                                                  \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                             \
    template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                                  \
    template std::vector<T> softmax<T>(std::span<const T>);                                                   \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, LayerNormCache<T>*); \
    template void layer_norm_backward<T>(const LayerNormCache<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                         Tensor<T>&, Tensor<T>&, Tensor<T>&);                                 \
    template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const AttentionParams<T>&, std::size_t,      \
                                               AttentionCache<T>*);                                           \
    template void multi_head_attention_backward<T>(const AttentionCache<T>&, const AttentionParams<T>&,       \
                                                   std::size_t, const Tensor<T>&, Tensor<T>&,                 \
                                                   const AttentionGrads<T>&);

SLEEPNET_INSTANTIATE_KERNELS(float)
SLEEPNET_INSTANTIATE_KERNELS(double)

#undef SLEEPNET_INSTANTIATE_KERNELS

}  // namespace sleepnet
