#pragma once

#include "scnfusion/nn.hpp"

namespace scnfusion {

struct ModelConfig {
    int n_rois = 116;
    int aux_dim = 119;
    int conv_filters[3] = {64, 128, 256};
    int kernel = 3;
    int scn_fc1 = 128;
    int scn_fc2 = 64;
    int aux_fc1 = 64;
    int aux_fc2 = 32;
    int fusion_fc1 = 64;
    int n_classes = 2;
    double dropout_cnn = 0.2;
    double dropout_aux = 0.3;
    bool no_aux = false;  // ablation: aux branch replaced by a zero vector
};

// SCN-CNN encoder + auxiliary MLP + late-fusion classification head.
class DuScnFusionNet {
public:
    DuScnFusionNet(const ModelConfig& cfg, std::uint64_t init_seed, Rng* dropout_rng);

    // scn: (B, 2, R, R); aux: (B, aux_dim). Returns logits (B, n_classes).
    Tensor forward(const Tensor& scn, const Tensor& aux, Mode mode);

    // Fills parameter grads from d(loss)/d(logits). When capture_conv3_grad is
    // set, the gradient at the final conv block's ReLU output is kept for
    // Grad-CAM.
    void backward(const Tensor& dlogits, bool capture_conv3_grad = false);

    std::vector<Param*> params();
    // Pointers to the batchnorm running mean/var vectors, for snapshotting.
    std::vector<std::vector<double>*> bn_stat_handles();
    void zero_grads();
    size_t parameter_count();

    const Tensor& conv3_activation() const { return conv3_act_; }
    const Tensor& conv3_grad() const { return conv3_grad_; }

    const ModelConfig& config() const { return cfg_; }
    void set_dropout_frozen(bool on);

    void save(const std::string& path, const std::string& manifest_json);
    std::string load(const std::string& path);

private:
    ModelConfig cfg_;
    Rng init_rng_;  // declared before the layers: member init order matters

    Conv2d conv1_, conv2_, conv3_;
    BatchNorm2d bn1_, bn2_, bn3_;
    ReLU relu1_, relu2_, relu3_, relu_fc_, relu_aux_, relu_fus_;
    MaxPool2d pool1_, pool2_;
    AdaptiveAvgPool2d avgpool_;
    Linear scn_fc1_, scn_fc2_, aux_fc1_, aux_fc2_, fusion_fc1_, fusion_fc2_;
    Dropout drop_cnn_, drop_aux_;

    int batch_ = 0;
    Tensor conv3_act_, conv3_grad_;
};

}  // namespace scnfusion
