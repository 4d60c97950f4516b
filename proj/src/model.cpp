#include "scnfusion/model.hpp"

namespace scnfusion {

DuScnFusionNet::DuScnFusionNet(const ModelConfig& cfg, std::uint64_t init_seed,
                               Rng* dropout_rng)
    : cfg_(cfg),
      init_rng_(child_seed(init_seed, 0x494e4954)),
      conv1_(2, cfg.conv_filters[0], cfg.kernel, 1, cfg.kernel / 2, init_rng_),
      conv2_(cfg.conv_filters[0], cfg.conv_filters[1], cfg.kernel, 1,
             cfg.kernel / 2, init_rng_),
      conv3_(cfg.conv_filters[1], cfg.conv_filters[2], cfg.kernel, 1,
             cfg.kernel / 2, init_rng_),
      bn1_(cfg.conv_filters[0]),
      bn2_(cfg.conv_filters[1]),
      bn3_(cfg.conv_filters[2]),
      scn_fc1_(cfg.conv_filters[2], cfg.scn_fc1, init_rng_),
      scn_fc2_(cfg.scn_fc1, cfg.scn_fc2, init_rng_),
      aux_fc1_(cfg.aux_dim, cfg.aux_fc1, init_rng_),
      aux_fc2_(cfg.aux_fc1, cfg.aux_fc2, init_rng_),
      fusion_fc1_(cfg.scn_fc2 + cfg.aux_fc2, cfg.fusion_fc1, init_rng_),
      fusion_fc2_(cfg.fusion_fc1, cfg.n_classes, init_rng_),
      drop_cnn_(cfg.dropout_cnn, dropout_rng),
      drop_aux_(cfg.dropout_aux, dropout_rng) {}

Tensor DuScnFusionNet::forward(const Tensor& scn, const Tensor& aux, Mode mode) {
    if (scn.shape.size() != 4 || scn.shape[1] != 2 || scn.shape[2] != cfg_.n_rois ||
        scn.shape[3] != cfg_.n_rois)
        throw DataError("model: SCN input must be (B,2,R,R)");
    if (!cfg_.no_aux &&
        (aux.shape.size() != 2 || aux.shape[1] != cfg_.aux_dim ||
         aux.shape[0] != scn.shape[0]))
        throw DataError("model: aux input must be (B,aux_dim)");
    batch_ = scn.shape[0];

    Tensor x = conv1_.forward(scn, mode);
    x = bn1_.forward(x, mode);
    x = relu1_.forward(x, mode);
    x = pool1_.forward(x, mode);
    x = conv2_.forward(x, mode);
    x = bn2_.forward(x, mode);
    x = relu2_.forward(x, mode);
    x = pool2_.forward(x, mode);
    x = conv3_.forward(x, mode);
    x = bn3_.forward(x, mode);
    x = relu3_.forward(x, mode);
    conv3_act_ = x;
    x = avgpool_.forward(x, mode);
    x.shape = {batch_, cfg_.conv_filters[2]};  // flatten (B,C,1,1) -> (B,C)
    x = scn_fc1_.forward(x, mode);
    x = relu_fc_.forward(x, mode);
    x = drop_cnn_.forward(x, mode);
    Tensor z_scn = scn_fc2_.forward(x, mode);

    Tensor z_aux({batch_, cfg_.aux_fc2});
    if (!cfg_.no_aux) {
        Tensor a = aux_fc1_.forward(aux, mode);
        a = relu_aux_.forward(a, mode);
        a = drop_aux_.forward(a, mode);
        z_aux = aux_fc2_.forward(a, mode);
    }

    Tensor fused({batch_, cfg_.scn_fc2 + cfg_.aux_fc2});
    for (int b = 0; b < batch_; ++b) {
        for (int i = 0; i < cfg_.scn_fc2; ++i) fused.at2(b, i) = z_scn.at2(b, i);
        for (int i = 0; i < cfg_.aux_fc2; ++i)
            fused.at2(b, cfg_.scn_fc2 + i) = z_aux.at2(b, i);
    }
    Tensor f = fusion_fc1_.forward(fused, mode);
    f = relu_fus_.forward(f, mode);
    return fusion_fc2_.forward(f, mode);
}

void DuScnFusionNet::backward(const Tensor& dlogits, bool capture_conv3_grad) {
    Tensor d = fusion_fc2_.backward(dlogits);
    d = relu_fus_.backward(d);
    d = fusion_fc1_.backward(d);

    Tensor d_scn({batch_, cfg_.scn_fc2});
    Tensor d_aux({batch_, cfg_.aux_fc2});
    for (int b = 0; b < batch_; ++b) {
        for (int i = 0; i < cfg_.scn_fc2; ++i) d_scn.at2(b, i) = d.at2(b, i);
        for (int i = 0; i < cfg_.aux_fc2; ++i)
            d_aux.at2(b, i) = d.at2(b, cfg_.scn_fc2 + i);
    }

    if (!cfg_.no_aux) {
        Tensor da = aux_fc2_.backward(d_aux);
        da = drop_aux_.backward(da);
        da = relu_aux_.backward(da);
        aux_fc1_.backward(da);
    }

    Tensor dx = scn_fc2_.backward(d_scn);
    dx = drop_cnn_.backward(dx);
    dx = relu_fc_.backward(dx);
    dx = scn_fc1_.backward(dx);
    dx.shape = {batch_, cfg_.conv_filters[2], 1, 1};
    dx = avgpool_.backward(dx);
    if (capture_conv3_grad) conv3_grad_ = dx;
    dx = relu3_.backward(dx);
    dx = bn3_.backward(dx);
    dx = conv3_.backward(dx);
    dx = pool2_.backward(dx);
    dx = relu2_.backward(dx);
    dx = bn2_.backward(dx);
    dx = conv2_.backward(dx);
    dx = pool1_.backward(dx);
    dx = relu1_.backward(dx);
    dx = bn1_.backward(dx);
    conv1_.backward(dx);
}

std::vector<Param*> DuScnFusionNet::params() {
    std::vector<Param*> out;
    for (Layer* layer :
         {static_cast<Layer*>(&conv1_), static_cast<Layer*>(&bn1_),
          static_cast<Layer*>(&conv2_), static_cast<Layer*>(&bn2_),
          static_cast<Layer*>(&conv3_), static_cast<Layer*>(&bn3_),
          static_cast<Layer*>(&scn_fc1_), static_cast<Layer*>(&scn_fc2_),
          static_cast<Layer*>(&aux_fc1_), static_cast<Layer*>(&aux_fc2_),
          static_cast<Layer*>(&fusion_fc1_), static_cast<Layer*>(&fusion_fc2_)}) {
        for (Param* p : layer->params()) out.push_back(p);
    }
    return out;
}

std::vector<std::vector<double>*> DuScnFusionNet::bn_stat_handles() {
    std::vector<std::vector<double>*> out;
    for (BatchNorm2d* bn : {&bn1_, &bn2_, &bn3_}) {
        out.push_back(&bn->running_mean());
        out.push_back(&bn->running_var());
    }
    return out;
}

void DuScnFusionNet::zero_grads() {
    for (Param* p : params()) p->zero_grad();
}

size_t DuScnFusionNet::parameter_count() {
    size_t n = 0;
    for (Param* p : params()) n += p->value.numel();
    return n;
}

void DuScnFusionNet::set_dropout_frozen(bool on) {
    drop_cnn_.freeze_mask(on);
    drop_aux_.freeze_mask(on);
}

void DuScnFusionNet::save(const std::string& path, const std::string& manifest_json) {
    // Running BN stats ride along as pseudo-params so eval is restorable.
    std::vector<Param*> ps = params();
    std::vector<Param> bn_stats;
    bn_stats.reserve(6);
    for (BatchNorm2d* bn : {&bn1_, &bn2_, &bn3_}) {
        Param mean({static_cast<int>(bn->running_mean().size())});
        mean.value.v = bn->running_mean();
        bn_stats.push_back(std::move(mean));
        Param var({static_cast<int>(bn->running_var().size())});
        var.value.v = bn->running_var();
        bn_stats.push_back(std::move(var));
    }
    for (Param& p : bn_stats) ps.push_back(&p);
    save_checkpoint(path, ps, manifest_json);
}

std::string DuScnFusionNet::load(const std::string& path) {
    std::vector<Param*> ps = params();
    std::vector<Param> bn_stats;
    bn_stats.reserve(6);
    for (BatchNorm2d* bn : {&bn1_, &bn2_, &bn3_}) {
        bn_stats.emplace_back(
            std::vector<int>{static_cast<int>(bn->running_mean().size())});
        bn_stats.emplace_back(
            std::vector<int>{static_cast<int>(bn->running_var().size())});
    }
    for (Param& p : bn_stats) ps.push_back(&p);
    std::string manifest = load_checkpoint(path, ps);
    int i = static_cast<int>(ps.size()) - 6;
    for (BatchNorm2d* bn : {&bn1_, &bn2_, &bn3_}) {
        bn->running_mean() = ps[i++]->value.v;
        bn->running_var() = ps[i++]->value.v;
    }
    return manifest;
}

}  // namespace scnfusion
