#include "scnfusion/nn.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <fstream>

extern "C" void openblas_set_num_threads(int);

namespace scnfusion {

namespace {

// Trainings are parallelized at the job level; BLAS must stay single-threaded
// so results do not depend on --jobs.
struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
} blas_init;

int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// (Cin,H,W) slice -> col (Cin*k*k, Hout*Wout), row-major.
void im2col(const double* x, int cin, int h, int w, int k, int stride, int pad,
            double* col) {
    int ho = conv_out_dim(h, k, stride, pad);
    int wo = conv_out_dim(w, k, stride, pad);
    size_t n = static_cast<size_t>(ho) * wo;
    for (int c = 0; c < cin; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                double* row = col + ((static_cast<size_t>(c) * k + ki) * k + kj) * n;
                size_t idx = 0;
                for (int oi = 0; oi < ho; ++oi) {
                    int ii = oi * stride - pad + ki;
                    if (ii < 0 || ii >= h) {
                        for (int oj = 0; oj < wo; ++oj) row[idx++] = 0.0;
                        continue;
                    }
                    const double* src = x + (static_cast<size_t>(c) * h + ii) * w;
                    for (int oj = 0; oj < wo; ++oj) {
                        int jj = oj * stride - pad + kj;
                        row[idx++] = (jj >= 0 && jj < w) ? src[jj] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* col, int cin, int h, int w, int k, int stride, int pad,
            double* x) {
    int ho = conv_out_dim(h, k, stride, pad);
    int wo = conv_out_dim(w, k, stride, pad);
    size_t n = static_cast<size_t>(ho) * wo;
    std::memset(x, 0, sizeof(double) * cin * h * w);
    for (int c = 0; c < cin; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const double* row = col + ((static_cast<size_t>(c) * k + ki) * k + kj) * n;
                size_t idx = 0;
                for (int oi = 0; oi < ho; ++oi) {
                    int ii = oi * stride - pad + ki;
                    if (ii < 0 || ii >= h) {
                        idx += wo;
                        continue;
                    }
                    double* dst = x + (static_cast<size_t>(c) * h + ii) * w;
                    for (int oj = 0; oj < wo; ++oj, ++idx) {
                        int jj = oj * stride - pad + kj;
                        if (jj >= 0 && jj < w) dst[jj] += row[idx];
                    }
                }
            }
        }
    }
}

void kaiming_uniform(Tensor& t, int fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
}

}  // namespace

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
                ldb, beta, c, ldc);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride,
               int padding, Rng& rng)
    : cin_(in_channels),
      cout_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding),
      weight_({out_channels, in_channels, kernel, kernel}),
      bias_({out_channels}) {
    kaiming_uniform(weight_.value, in_channels * kernel * kernel, rng);
}

Tensor Conv2d::forward(const Tensor& x, Mode) {
    if (x.shape.size() != 4 || x.shape[1] != cin_)
        throw DataError("conv2d: bad input shape");
    input_ = x;
    int b = x.shape[0], h = x.shape[2], w = x.shape[3];
    int ho = conv_out_dim(h, k_, stride_, pad_);
    int wo = conv_out_dim(w, k_, stride_, pad_);
    if (ho < 1 || wo < 1) throw DataError("conv2d: output would be empty");
    int kdim = cin_ * k_ * k_;
    size_t n = static_cast<size_t>(ho) * wo;

    Tensor y({b, cout_, ho, wo});
    std::vector<double> col(static_cast<size_t>(kdim) * n);
    for (int bi = 0; bi < b; ++bi) {
        const double* xb = x.v.data() + static_cast<size_t>(bi) * cin_ * h * w;
        im2col(xb, cin_, h, w, k_, stride_, pad_, col.data());
        double* yb = y.v.data() + static_cast<size_t>(bi) * cout_ * n;
        gemm(false, false, cout_, static_cast<int>(n), kdim, 1.0,
             weight_.value.v.data(), kdim, col.data(), static_cast<int>(n), 0.0,
             yb, static_cast<int>(n));
        for (int co = 0; co < cout_; ++co) {
            double bval = bias_.value.v[co];
            double* dst = yb + static_cast<size_t>(co) * n;
            for (size_t i = 0; i < n; ++i) dst[i] += bval;
        }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    int b = input_.shape[0], h = input_.shape[2], w = input_.shape[3];
    int ho = dy.shape[2], wo = dy.shape[3];
    int kdim = cin_ * k_ * k_;
    size_t n = static_cast<size_t>(ho) * wo;

    Tensor dx({b, cin_, h, w});
    std::vector<double> col(static_cast<size_t>(kdim) * n);
    std::vector<double> colgrad(static_cast<size_t>(kdim) * n);
    for (int bi = 0; bi < b; ++bi) {
        const double* xb = input_.v.data() + static_cast<size_t>(bi) * cin_ * h * w;
        const double* dyb = dy.v.data() + static_cast<size_t>(bi) * cout_ * n;
        im2col(xb, cin_, h, w, k_, stride_, pad_, col.data());
        // dW += dy_b * col^T
        gemm(false, true, cout_, kdim, static_cast<int>(n), 1.0, dyb,
             static_cast<int>(n), col.data(), static_cast<int>(n), 1.0,
             weight_.grad.v.data(), kdim);
        // db += row sums
        for (int co = 0; co < cout_; ++co) {
            double s = 0.0;
            const double* src = dyb + static_cast<size_t>(co) * n;
            for (size_t i = 0; i < n; ++i) s += src[i];
            bias_.grad.v[co] += s;
        }
        // colgrad = W^T * dy_b, then scatter back
        gemm(true, false, kdim, static_cast<int>(n), cout_, 1.0,
             weight_.value.v.data(), kdim, dyb, static_cast<int>(n), 0.0,
             colgrad.data(), static_cast<int>(n));
        col2im(colgrad.data(), cin_, h, w, k_, stride_, pad_,
               dx.v.data() + static_cast<size_t>(bi) * cin_ * h * w);
    }
    return dx;
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_({channels}),
      beta_({channels}),
      running_mean_(channels, 0.0),
      running_var_(channels, 1.0) {
    std::fill(gamma_.value.v.begin(), gamma_.value.v.end(), 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
    if (x.shape.size() != 4 || x.shape[1] != channels_)
        throw DataError("batchnorm2d: bad input shape");
    int b = x.shape[0], h = x.shape[2], w = x.shape[3];
    if (mode == Mode::Train && b < 2)
        throw DataError("batchnorm2d: training mode needs batch >= 2");
    last_mode_ = mode;
    size_t plane = static_cast<size_t>(h) * w;
    double count = static_cast<double>(b) * plane;

    Tensor y(x.shape);
    xhat_ = Tensor(x.shape);
    invstd_.assign(channels_, 0.0);
    for (int c = 0; c < channels_; ++c) {
        double mean, var;
        if (mode == Mode::Train) {
            double sum = 0.0;
            for (int bi = 0; bi < b; ++bi) {
                const double* src =
                    x.v.data() + (static_cast<size_t>(bi) * channels_ + c) * plane;
                for (size_t i = 0; i < plane; ++i) sum += src[i];
            }
            mean = sum / count;
            double ss = 0.0;
            for (int bi = 0; bi < b; ++bi) {
                const double* src =
                    x.v.data() + (static_cast<size_t>(bi) * channels_ + c) * plane;
                for (size_t i = 0; i < plane; ++i) {
                    double d = src[i] - mean;
                    ss += d * d;
                }
            }
            var = ss / count;
            running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
            running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var;
        } else {
            mean = running_mean_[c];
            var = running_var_[c];
        }
        double invstd = 1.0 / std::sqrt(var + eps_);
        invstd_[c] = invstd;
        double g = gamma_.value.v[c];
        double bta = beta_.value.v[c];
        for (int bi = 0; bi < b; ++bi) {
            size_t off = (static_cast<size_t>(bi) * channels_ + c) * plane;
            for (size_t i = 0; i < plane; ++i) {
                double xh = (x.v[off + i] - mean) * invstd;
                xhat_.v[off + i] = xh;
                y.v[off + i] = g * xh + bta;
            }
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    int b = dy.shape[0], h = dy.shape[2], w = dy.shape[3];
    size_t plane = static_cast<size_t>(h) * w;
    double count = static_cast<double>(b) * plane;

    Tensor dx(dy.shape);
    for (int c = 0; c < channels_; ++c) {
        double g = gamma_.value.v[c];
        double invstd = invstd_[c];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int bi = 0; bi < b; ++bi) {
            size_t off = (static_cast<size_t>(bi) * channels_ + c) * plane;
            for (size_t i = 0; i < plane; ++i) {
                sum_dy += dy.v[off + i];
                sum_dy_xhat += dy.v[off + i] * xhat_.v[off + i];
            }
        }
        gamma_.grad.v[c] += sum_dy_xhat;
        beta_.grad.v[c] += sum_dy;
        if (last_mode_ == Mode::Train) {
            for (int bi = 0; bi < b; ++bi) {
                size_t off = (static_cast<size_t>(bi) * channels_ + c) * plane;
                for (size_t i = 0; i < plane; ++i) {
                    dx.v[off + i] =
                        g * invstd / count *
                        (count * dy.v[off + i] - sum_dy -
                         xhat_.v[off + i] * sum_dy_xhat);
                }
            }
        } else {
            // Eval-mode stats are constants.
            double scale = g * invstd;
            for (int bi = 0; bi < b; ++bi) {
                size_t off = (static_cast<size_t>(bi) * channels_ + c) * plane;
                for (size_t i = 0; i < plane; ++i)
                    dx.v[off + i] = scale * dy.v[off + i];
            }
        }
    }
    return dx;
}

// ------------------------------------------------------------------ ReLU

Tensor ReLU::forward(const Tensor& x, Mode) {
    Tensor y(x.shape);
    active_.resize(x.numel());
    for (size_t i = 0; i < x.numel(); ++i) {
        bool on = x.v[i] > 0.0;
        active_[i] = on;
        y.v[i] = on ? x.v[i] : 0.0;
    }
    return y;
}

Tensor ReLU::backward(const Tensor& dy) {
    Tensor dx(dy.shape);
    for (size_t i = 0; i < dy.numel(); ++i) dx.v[i] = active_[i] ? dy.v[i] : 0.0;
    return dx;
}

// ------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x, Mode) {
    int b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (h < k_ || w < k_) throw DataError("maxpool2d: input smaller than kernel");
    int ho = (h - k_) / stride_ + 1;
    int wo = (w - k_) / stride_ + 1;
    in_shape_ = x.shape;
    Tensor y({b, c, ho, wo});
    argmax_.assign(y.numel(), 0);
    size_t out_idx = 0;
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const double* plane =
                x.v.data() + (static_cast<size_t>(bi) * c + ci) * h * w;
            size_t base = (static_cast<size_t>(bi) * c + ci) * h * w;
            for (int oi = 0; oi < ho; ++oi)
                for (int oj = 0; oj < wo; ++oj, ++out_idx) {
                    int i0 = oi * stride_, j0 = oj * stride_;
                    double best = plane[static_cast<size_t>(i0) * w + j0];
                    size_t best_idx = static_cast<size_t>(i0) * w + j0;
                    for (int di = 0; di < k_; ++di)
                        for (int dj = 0; dj < k_; ++dj) {
                            size_t idx = static_cast<size_t>(i0 + di) * w + (j0 + dj);
                            if (plane[idx] > best) {  // first occurrence wins ties
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                    y.v[out_idx] = best;
                    argmax_[out_idx] = base + best_idx;
                }
        }
    return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) {
    Tensor dx(in_shape_);
    for (size_t i = 0; i < dy.numel(); ++i) dx.v[argmax_[i]] += dy.v[i];
    return dx;
}

// ----------------------------------------------------- AdaptiveAvgPool2d

Tensor AdaptiveAvgPool2d::forward(const Tensor& x, Mode) {
    int b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    in_shape_ = x.shape;
    size_t plane = static_cast<size_t>(h) * w;
    Tensor y({b, c, 1, 1});
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const double* src = x.v.data() + (static_cast<size_t>(bi) * c + ci) * plane;
            double s = 0.0;
            for (size_t i = 0; i < plane; ++i) s += src[i];
            y.v[static_cast<size_t>(bi) * c + ci] = s / static_cast<double>(plane);
        }
    return y;
}

Tensor AdaptiveAvgPool2d::backward(const Tensor& dy) {
    int b = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    size_t plane = static_cast<size_t>(h) * w;
    Tensor dx(in_shape_);
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            double g = dy.v[static_cast<size_t>(bi) * c + ci] / static_cast<double>(plane);
            double* dst = dx.v.data() + (static_cast<size_t>(bi) * c + ci) * plane;
            for (size_t i = 0; i < plane; ++i) dst[i] = g;
        }
    return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features, Rng& rng)
    : in_(in_features),
      out_(out_features),
      weight_({out_features, in_features}),
      bias_({out_features}) {
    kaiming_uniform(weight_.value, in_features, rng);
}

Tensor Linear::forward(const Tensor& x, Mode) {
    if (x.shape.size() != 2 || x.shape[1] != in_)
        throw DataError("linear: bad input shape");
    input_ = x;
    int b = x.shape[0];
    Tensor y({b, out_});
    gemm(false, true, b, out_, in_, 1.0, x.v.data(), in_, weight_.value.v.data(),
         in_, 0.0, y.v.data(), out_);
    for (int bi = 0; bi < b; ++bi)
        for (int o = 0; o < out_; ++o) y.at2(bi, o) += bias_.value.v[o];
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    int b = input_.shape[0];
    // dW += dy^T * x
    gemm(true, false, out_, in_, b, 1.0, dy.v.data(), out_, input_.v.data(), in_,
         1.0, weight_.grad.v.data(), in_);
    for (int bi = 0; bi < b; ++bi)
        for (int o = 0; o < out_; ++o) bias_.grad.v[o] += dy.at2(bi, o);
    Tensor dx({b, in_});
    gemm(false, false, b, in_, out_, 1.0, dy.v.data(), out_,
         weight_.value.v.data(), in_, 0.0, dx.v.data(), in_);
    return dx;
}

// --------------------------------------------------------------- Dropout

Dropout::Dropout(double rate, Rng* rng) : rate_(rate), rng_(rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
}

Tensor Dropout::forward(const Tensor& x, Mode mode) {
    if (mode == Mode::Eval || rate_ == 0.0) {
        mask_.assign(x.numel(), 1.0);
        return x;
    }
    if (!rng_) throw ConfigError("dropout in training mode needs an RNG");
    if (!frozen_ || mask_.size() != x.numel()) {
        mask_.resize(x.numel());
        double keep = 1.0 - rate_;
        for (size_t i = 0; i < x.numel(); ++i)
            mask_[i] = (rng_->uniform() >= rate_) ? 1.0 / keep : 0.0;
    }
    Tensor y(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) y.v[i] = x.v[i] * mask_[i];
    return y;
}

Tensor Dropout::backward(const Tensor& dy) {
    Tensor dx(dy.shape);
    for (size_t i = 0; i < dy.numel(); ++i) dx.v[i] = dy.v[i] * mask_[i];
    return dx;
}

// --------------------------------------------------- softmax / CE / Adam

Matrix softmax(const Tensor& logits) {
    int b = logits.shape[0], k = logits.shape[1];
    Matrix p(b, k);
    for (int bi = 0; bi < b; ++bi) {
        double mx = logits.at2(bi, 0);
        for (int c = 1; c < k; ++c) mx = std::max(mx, logits.at2(bi, c));
        double sum = 0.0;
        for (int c = 0; c < k; ++c) {
            double e = std::exp(logits.at2(bi, c) - mx);
            p.at(bi, c) = e;
            sum += e;
        }
        for (int c = 0; c < k; ++c) p.at(bi, c) /= sum;
    }
    return p;
}

CeResult softmax_crossentropy(const Tensor& logits, const std::vector<int>& labels,
                              const std::vector<double>& class_weights) {
    int b = logits.shape[0], k = logits.shape[1];
    if (static_cast<int>(labels.size()) != b)
        throw DataError("crossentropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= k) throw DataError("crossentropy: class index out of range");

    CeResult res;
    res.probs = softmax(logits);
    res.dlogits = Tensor({b, k});

    double weight_sum = 0.0;
    std::vector<double> w(b, 1.0);
    for (int bi = 0; bi < b; ++bi) {
        if (!class_weights.empty()) w[bi] = class_weights.at(labels[bi]);
        weight_sum += w[bi];
    }
    if (weight_sum <= 0.0) throw NumericError("crossentropy: nonpositive weight sum");

    double loss = 0.0;
    for (int bi = 0; bi < b; ++bi) {
        // log p computed via log-sum-exp for stability
        double mx = logits.at2(bi, 0);
        for (int c = 1; c < k; ++c) mx = std::max(mx, logits.at2(bi, c));
        double lse = 0.0;
        for (int c = 0; c < k; ++c) lse += std::exp(logits.at2(bi, c) - mx);
        lse = mx + std::log(lse);
        loss += w[bi] * (lse - logits.at2(bi, labels[bi]));
        for (int c = 0; c < k; ++c) {
            double ind = (c == labels[bi]) ? 1.0 : 0.0;
            res.dlogits.at2(bi, c) = w[bi] * (res.probs.at(bi, c) - ind) / weight_sum;
        }
    }
    res.loss = loss / weight_sum;
    return res;
}

void Adam::init(const std::vector<Param*>& params) {
    step_count = 0;
    m1.clear();
    m2.clear();
    for (const Param* p : params) {
        m1.emplace_back(p->value.numel(), 0.0);
        m2.emplace_back(p->value.numel(), 0.0);
    }
}

void Adam::step(const std::vector<Param*>& params) {
    if (m1.size() != params.size()) throw ConfigError("Adam state not initialized");
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        auto& m = m1[pi];
        auto& v = m2[pi];
        for (size_t i = 0; i < p.value.numel(); ++i) {
            double g = p.grad.v[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ----------------------------------------------------------- checkpoints

void save_checkpoint(const std::string& path, const std::vector<Param*>& params,
                     const std::string& manifest_json) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write("SCNF", 4);
    std::uint32_t mlen = static_cast<std::uint32_t>(manifest_json.size());
    f.write(reinterpret_cast<const char*>(&mlen), 4);
    f.write(manifest_json.data(), mlen);
    std::uint32_t nparams = static_cast<std::uint32_t>(params.size());
    f.write(reinterpret_cast<const char*>(&nparams), 4);
    for (const Param* p : params) {
        std::uint32_t ndim = static_cast<std::uint32_t>(p->value.shape.size());
        f.write(reinterpret_cast<const char*>(&ndim), 4);
        for (int d : p->value.shape) {
            std::int32_t dd = d;
            f.write(reinterpret_cast<const char*>(&dd), 4);
        }
        f.write(reinterpret_cast<const char*>(p->value.v.data()),
                static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
    }
    if (!f) throw DataError("short write: " + path);
}

std::string load_checkpoint(const std::string& path,
                            const std::vector<Param*>& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "SCNF", 4) != 0)
        throw DataError(path + ": not a checkpoint file");
    std::uint32_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 4);
    std::string manifest(mlen, '\0');
    f.read(manifest.data(), mlen);
    std::uint32_t nparams = 0;
    f.read(reinterpret_cast<char*>(&nparams), 4);
    if (!f || nparams != params.size())
        throw DataError(path + ": parameter count mismatch");
    for (Param* p : params) {
        std::uint32_t ndim = 0;
        f.read(reinterpret_cast<char*>(&ndim), 4);
        if (!f || ndim != p->value.shape.size())
            throw DataError(path + ": rank mismatch in checkpoint");
        for (int d : p->value.shape) {
            std::int32_t dd = 0;
            f.read(reinterpret_cast<char*>(&dd), 4);
            if (!f || dd != d) throw DataError(path + ": shape mismatch in checkpoint");
        }
        f.read(reinterpret_cast<char*>(p->value.v.data()),
               static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
        if (!f) throw DataError(path + ": truncated checkpoint");
    }
    return manifest;
}

}  // namespace scnfusion
