#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scnfusion/common.hpp"
#include "scnfusion/rng.hpp"

namespace scnfusion {

// Dense fp64 tensor, up to 4 axes (batch, channel, height, width).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(numel_of(shape), 0.0);
    }
    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= static_cast<size_t>(d);
        return n;
    }
    size_t numel() const { return v.size(); }
    int dim(int i) const { return shape[i]; }

    // (B,C,H,W) addressing.
    double& at4(int b, int c, int h, int w) {
        return v[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at4(int b, int c, int h, int w) const {
        return v[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    // (B,F) addressing.
    double& at2(int b, int f) { return v[static_cast<size_t>(b) * shape[1] + f]; }
    double at2(int b, int f) const { return v[static_cast<size_t>(b) * shape[1] + f]; }

    bool all_finite() const;
};

struct Param {
    Tensor value;
    Tensor grad;

    explicit Param(std::vector<int> shape) : value(shape), grad(std::move(shape)) {}
    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

enum class Mode { Train, Eval };

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, Mode mode) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual std::vector<Param*> params() { return {}; }
};

class Conv2d : public Layer {
public:
    Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding,
           Rng& rng);
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

    Param& weight() { return weight_; }
    Param& bias() { return bias_; }

private:
    int cin_, cout_, k_, stride_, pad_;
    Param weight_;  // (Cout, Cin, k, k)
    Param bias_;    // (Cout)
    Tensor input_;
};

class BatchNorm2d : public Layer {
public:
    explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override { return {&gamma_, &beta_}; }

    std::vector<double>& running_mean() { return running_mean_; }
    std::vector<double>& running_var() { return running_var_; }

private:
    int channels_;
    double eps_, momentum_;
    Param gamma_, beta_;
    std::vector<double> running_mean_, running_var_;
    Tensor xhat_;
    std::vector<double> invstd_;
    Mode last_mode_ = Mode::Eval;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;

private:
    std::vector<std::uint8_t> active_;
};

class MaxPool2d : public Layer {
public:
    MaxPool2d(int kernel = 2, int stride = 2) : k_(kernel), stride_(stride) {}
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;

private:
    int k_, stride_;
    std::vector<int> in_shape_;
    std::vector<size_t> argmax_;  // flat input index per output element
};

// Adaptive average pooling to a 1x1 spatial output.
class AdaptiveAvgPool2d : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;

private:
    std::vector<int> in_shape_;
};

class Linear : public Layer {
public:
    Linear(int in_features, int out_features, Rng& rng);
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

    Param& weight() { return weight_; }
    Param& bias() { return bias_; }

private:
    int in_, out_;
    Param weight_;  // (out, in)
    Param bias_;    // (out)
    Tensor input_;
};

// Inverted dropout: survivors scaled by 1/(1-rate) in training, identity in
// eval. The mask can be frozen for finite-difference checks.
class Dropout : public Layer {
public:
    Dropout(double rate, Rng* rng);
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& dy) override;
    void freeze_mask(bool on) { frozen_ = on; }

private:
    double rate_;
    Rng* rng_;
    bool frozen_ = false;
    std::vector<double> mask_;
};

// Joint softmax + cross-entropy with the log-sum-exp trick and optional
// per-class weights (weighted-mean reduction).
struct CeResult {
    double loss = 0.0;
    Tensor dlogits;  // (B, classes)
    Matrix probs;    // B x classes
};
CeResult softmax_crossentropy(const Tensor& logits, const std::vector<int>& labels,
                              const std::vector<double>& class_weights = {});

Matrix softmax(const Tensor& logits);

struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::vector<std::vector<double>> m1, m2;

    void init(const std::vector<Param*>& params);
    void step(const std::vector<Param*>& params);
};

// Deterministic flat-fp64 checkpoint with a JSON manifest header.
void save_checkpoint(const std::string& path, const std::vector<Param*>& params,
                     const std::string& manifest_json);
std::string load_checkpoint(const std::string& path, const std::vector<Param*>& params);

// GEMM wrappers (row-major). C = A(MxK) * B(KxN) [+ C when accumulate].
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

}  // namespace scnfusion
