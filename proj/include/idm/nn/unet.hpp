#pragma once

#include <set>

#include "idm/nn/layers.hpp"

namespace idm {

struct DenoiserConfig {
  int base_channels = 32;
  std::vector<int> channel_multipliers = {1, 2, 4};
  int num_res_blocks_per_scale = 2;
  std::set<int> attention_scales = {4};  // downsampling factors with self-attention
  int gamma_embed_dim = 128;
  int image_channels = 3;
  std::string prediction_target = "x0";  // "x0" or "epsilon"

  int in_channels() const { return 2 * image_channels; }
  int out_channels() const { return image_channels; }
  int total_downsampling() const { return 1 << (static_cast<int>(channel_multipliers.size()) - 1); }

  void validate() const {
    if (base_channels < 2) throw std::invalid_argument("DenoiserConfig: base_channels too small");
    if (channel_multipliers.empty())
      throw std::invalid_argument("DenoiserConfig: channel_multipliers empty");
    for (int m : channel_multipliers)
      if (m < 1) throw std::invalid_argument("DenoiserConfig: multipliers must be >= 1");
    if (num_res_blocks_per_scale < 1)
      throw std::invalid_argument("DenoiserConfig: num_res_blocks_per_scale must be >= 1");
    if (gamma_embed_dim < 8 || gamma_embed_dim % 2 != 0)
      throw std::invalid_argument("DenoiserConfig: gamma_embed_dim must be even and >= 8");
    if (image_channels != 1 && image_channels != 3)
      throw std::invalid_argument("DenoiserConfig: image_channels must be 1 or 3");
    if (prediction_target != "x0" && prediction_target != "epsilon")
      throw std::invalid_argument("DenoiserConfig: prediction_target must be x0 or epsilon");
  }
};

namespace nn {

// Conditional denoiser: dense U-Net over concat(noisy, condition) with the
// scalar gamma embedded sinusoidally (log-scale) and injected additively
// into every residual block. Fully convolutional; attention blocks operate
// on whatever spatial extent arrives.
template <typename S>
class UNet {
 public:
  explicit UNet(const DenoiserConfig& cfg) : cfg_(cfg) { build(); }

  const DenoiserConfig& config() const { return cfg_; }
  const ParamRefs<S>& params() { return params_; }

  Eigen::Index param_count() const {
    Eigen::Index n = 0;
    for (const auto* p : params_) n += p->value.size();
    return n;
  }

  void zero_grads() {
    for (auto* p : params_) p->grad.setZero();
  }

  // Fan-in-scaled normal init; zero-init output head and attention
  // projections. Deterministic in registry order.
  void init_params(RngStream rng) {
    for (auto* p : params_) {
      const bool zero_init = p->name == "out.conv.weight" || p->name.ends_with(".proj.weight");
      const bool is_bias = p->name.ends_with(".bias") || p->name.ends_with(".beta");
      const bool is_gain = p->name.ends_with(".gamma");
      if (is_gain) {
        p->value.setOnes();
      } else if (is_bias || zero_init) {
        p->value.setZero();
      } else {
        const S scale = S(1) / std::sqrt(static_cast<S>(p->value.cols()));
        for (Eigen::Index i = 0; i < p->value.size(); ++i)
          p->value.data()[i] = scale * static_cast<S>(rng.normal());
      }
    }
  }

  // cond, noisy: (C, B*H*W); gammas: one scalar per sample in (0,1].
  const Mat<S>& forward(const Mat<S>& cond, const Mat<S>& noisy, const Vec<S>& gammas,
                        const Shape& shape) {
    if (cond.rows() != cfg_.image_channels || noisy.rows() != cfg_.image_channels)
      throw shape_error("UNet::forward: channel mismatch");
    if (cond.cols() != shape.cols() || noisy.cols() != shape.cols() || gammas.size() != shape.b)
      throw shape_error("UNet::forward: column/batch mismatch");
    const int ds = cfg_.total_downsampling();
    if (shape.h % ds != 0 || shape.w % ds != 0)
      throw shape_error("UNet::forward: spatial dims must be divisible by " + std::to_string(ds));
    for (int b = 0; b < shape.b; ++b)
      if (!(gammas[b] > S(0)) || gammas[b] > S(1)) throw std::invalid_argument("UNet::forward: gamma in (0,1]");

    // gamma embedding: sinusoidal(log gamma) -> 2x (Linear, SiLU)
    const int half = cfg_.gamma_embed_dim / 2;
    Mat<S> sinusoid(cfg_.gamma_embed_dim, shape.b);
    for (int b = 0; b < shape.b; ++b) {
      const double lg = std::log(static_cast<double>(gammas[b]));
      for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        sinusoid(i, b) = static_cast<S>(std::sin(lg * freq));
        sinusoid(half + i, b) = static_cast<S>(std::cos(lg * freq));
      }
    }
    Mat<S> e0, e1;
    emb_lin1_.forward(sinusoid, e0);
    emb_act1_.forward(e0, e1);
    emb_lin2_.forward(e1, e0);
    emb_act2_.forward(e0, emb_);

    // stem over concatenated input
    Mat<S> x(cfg_.in_channels(), shape.cols());
    x.topRows(cfg_.image_channels) = noisy;
    x.bottomRows(cfg_.image_channels) = cond;

    shapes_.assign(num_scales(), shape);
    for (int s = 1; s < num_scales(); ++s)
      shapes_[s] = {shape.b, shapes_[s - 1].h / 2, shapes_[s - 1].w / 2};

    Mat<S> h;
    stem_.forward(x, shape, h);

    skips_.clear();
    for (int s = 0; s < num_scales(); ++s) {
      auto& stage = enc_[s];
      for (std::size_t i = 0; i < stage.blocks.size(); ++i) {
        Mat<S> out;
        stage.blocks[i].forward(h, emb_, shapes_[s], out);
        if (stage.attn[i]) {
          Mat<S> a;
          stage.attn[i]->forward(out, shapes_[s], a);
          out.swap(a);
        }
        skips_.push_back(out);
        h.swap(out);
      }
      if (stage.down) {
        Mat<S> d;
        stage.down->forward(h, shapes_[s], d);
        h.swap(d);
      }
    }

    const Shape& bottom = shapes_.back();
    {
      Mat<S> m;
      mid1_.forward(h, emb_, bottom, m);
      if (mid_attn_) {
        Mat<S> a;
        mid_attn_->forward(m, bottom, a);
        m.swap(a);
      }
      Mat<S> m2;
      mid2_.forward(m, emb_, bottom, m2);
      h.swap(m2);
    }

    dec_skip_idx_.assign(num_scales(), {});
    int next_skip = static_cast<int>(skips_.size());
    for (int s = num_scales() - 1; s >= 0; --s) {
      auto& stage = dec_[s];
      for (std::size_t i = 0; i < stage.blocks.size(); ++i) {
        const int idx = --next_skip;
        dec_skip_idx_[s].push_back(idx);
        Mat<S> cat(h.rows() + skips_[idx].rows(), h.cols());
        cat.topRows(h.rows()) = h;
        cat.bottomRows(skips_[idx].rows()) = skips_[idx];
        Mat<S> out;
        stage.blocks[i].forward(cat, emb_, shapes_[s], out);
        if (stage.attn[i]) {
          Mat<S> a;
          stage.attn[i]->forward(out, shapes_[s], a);
          out.swap(a);
        }
        h.swap(out);
      }
      if (stage.up) {
        Mat<S> u;
        stage.up->forward(h, shapes_[s], u);
        h.swap(u);
      }
    }

    Mat<S> n, a;
    out_norm_.forward(h, shape, n);
    out_act_.forward(n, a);
    out_conv_.forward(a, shape, out_);
    return out_;
  }

  // Backward from dL/d(output); accumulates parameter grads. Input grads are
  // not propagated out (inputs are data, not parameters).
  void backward(const Mat<S>& gout) {
    Mat<S> g, tmp;
    out_conv_.backward(gout, tmp);
    out_act_.backward(tmp, g);
    out_norm_.backward(g, tmp);
    g.swap(tmp);

    Mat<S> g_emb = Mat<S>::Zero(cfg_.gamma_embed_dim, shapes_[0].b);
    std::vector<Mat<S>> g_skips(skips_.size());

    for (int s = 0; s < num_scales(); ++s) {
      auto& stage = dec_[s];
      if (stage.up) {
        stage.up->backward(g, tmp);
        g.swap(tmp);
      }
      for (int i = static_cast<int>(stage.blocks.size()) - 1; i >= 0; --i) {
        if (stage.attn[i]) {
          stage.attn[i]->backward(g, tmp);
          g.swap(tmp);
        }
        Mat<S> gcat;
        stage.blocks[i].backward(g, shapes_[s], gcat, g_emb);
        const int idx = dec_skip_idx_[s][i];
        const Eigen::Index skip_rows = skips_[idx].rows();
        g = gcat.topRows(gcat.rows() - skip_rows);
        g_skips[idx] = gcat.bottomRows(skip_rows);
      }
    }

    {
      mid2_.backward(g, shapes_.back(), tmp, g_emb);
      g.swap(tmp);
      if (mid_attn_) {
        mid_attn_->backward(g, tmp);
        g.swap(tmp);
      }
      mid1_.backward(g, shapes_.back(), tmp, g_emb);
      g.swap(tmp);
    }

    int next_skip = static_cast<int>(skips_.size());
    for (int s = num_scales() - 1; s >= 0; --s) {
      auto& stage = enc_[s];
      if (stage.down) {
        stage.down->backward(g, tmp);
        g.swap(tmp);
      }
      for (int i = static_cast<int>(stage.blocks.size()) - 1; i >= 0; --i) {
        const int idx = --next_skip;
        g += g_skips[idx];
        if (stage.attn[i]) {
          stage.attn[i]->backward(g, tmp);
          g.swap(tmp);
        }
        stage.blocks[i].backward(g, shapes_[s], tmp, g_emb);
        g.swap(tmp);
      }
    }

    stem_.backward(g, tmp);

    emb_act2_.backward(g_emb, tmp);
    Mat<S> g2;
    emb_lin2_.backward(tmp, g2);
    emb_act1_.backward(g2, tmp);
    emb_lin1_.backward(tmp, g2);
  }

 private:
  struct EncStage {
    std::vector<ResBlock<S>> blocks;
    std::vector<std::unique_ptr<Attention<S>>> attn;
    std::unique_ptr<Conv2d<S>> down;
  };
  struct DecStage {
    std::vector<ResBlock<S>> blocks;
    std::vector<std::unique_ptr<Attention<S>>> attn;
    std::unique_ptr<Upsample<S>> up;
  };

  int num_scales() const { return static_cast<int>(cfg_.channel_multipliers.size()); }
  int scale_channels(int s) const { return cfg_.base_channels * cfg_.channel_multipliers[s]; }
  bool attn_at(int s) const { return cfg_.attention_scales.count(1 << s) > 0; }

  void build() {
    cfg_.validate();
    const int n = num_scales();
    const int emb = cfg_.gamma_embed_dim;

    emb_lin1_.configure("gamma_mlp.lin1", emb, emb);
    emb_lin2_.configure("gamma_mlp.lin2", emb, emb);
    stem_.configure("stem", cfg_.in_channels(), scale_channels(0), 3, 1);

    enc_.resize(n);
    int ch = scale_channels(0);
    for (int s = 0; s < n; ++s) {
      const int out_ch = scale_channels(s);
      auto& stage = enc_[s];
      stage.blocks.resize(cfg_.num_res_blocks_per_scale);
      stage.attn.resize(cfg_.num_res_blocks_per_scale);
      for (int i = 0; i < cfg_.num_res_blocks_per_scale; ++i) {
        const std::string base = "enc" + std::to_string(s) + ".rb" + std::to_string(i);
        stage.blocks[i].configure(base, i == 0 ? ch : out_ch, out_ch, emb);
        if (attn_at(s)) {
          stage.attn[i] = std::make_unique<Attention<S>>();
          stage.attn[i]->configure(base + ".attn", out_ch);
        }
      }
      ch = out_ch;
      if (s + 1 < n) {
        stage.down = std::make_unique<Conv2d<S>>();
        stage.down->configure("enc" + std::to_string(s) + ".down", ch, ch, 3, 2);
      }
    }

    mid1_.configure("mid.rb0", ch, ch, emb);
    if (attn_at(n - 1)) {
      mid_attn_ = std::make_unique<Attention<S>>();
      mid_attn_->configure("mid.attn", ch);
    }
    mid2_.configure("mid.rb1", ch, ch, emb);

    dec_.resize(n);
    for (int s = n - 1; s >= 0; --s) {
      const int out_ch = scale_channels(s);
      auto& stage = dec_[s];
      stage.blocks.resize(cfg_.num_res_blocks_per_scale);
      stage.attn.resize(cfg_.num_res_blocks_per_scale);
      for (int i = 0; i < cfg_.num_res_blocks_per_scale; ++i) {
        const std::string base = "dec" + std::to_string(s) + ".rb" + std::to_string(i);
        // skips arrive LIFO: each block consumes one encoder output of this scale
        stage.blocks[i].configure(base, ch + out_ch, out_ch, emb);
        if (attn_at(s)) {
          stage.attn[i] = std::make_unique<Attention<S>>();
          stage.attn[i]->configure(base + ".attn", out_ch);
        }
        ch = out_ch;
      }
      if (s > 0) {
        stage.up = std::make_unique<Upsample<S>>();
        stage.up->configure("dec" + std::to_string(s) + ".up", ch);
      }
    }

    out_norm_.configure("out.norm", ch);
    out_conv_.configure("out.conv", ch, cfg_.out_channels(), 3, 1);

    params_.clear();
    emb_lin1_.collect(params_);
    emb_lin2_.collect(params_);
    stem_.collect(params_);
    for (auto& stage : enc_) {
      for (std::size_t i = 0; i < stage.blocks.size(); ++i) {
        stage.blocks[i].collect(params_);
        if (stage.attn[i]) stage.attn[i]->collect(params_);
      }
      if (stage.down) stage.down->collect(params_);
    }
    mid1_.collect(params_);
    if (mid_attn_) mid_attn_->collect(params_);
    mid2_.collect(params_);
    for (int s = n - 1; s >= 0; --s) {
      auto& stage = dec_[s];
      for (std::size_t i = 0; i < stage.blocks.size(); ++i) {
        stage.blocks[i].collect(params_);
        if (stage.attn[i]) stage.attn[i]->collect(params_);
      }
      if (stage.up) stage.up->collect(params_);
    }
    out_norm_.collect(params_);
    out_conv_.collect(params_);
  }

  DenoiserConfig cfg_;
  Linear<S> emb_lin1_, emb_lin2_;
  SiLU<S> emb_act1_, emb_act2_;
  Conv2d<S> stem_;
  std::vector<EncStage> enc_;
  ResBlock<S> mid1_, mid2_;
  std::unique_ptr<Attention<S>> mid_attn_;
  std::vector<DecStage> dec_;
  GroupNorm<S> out_norm_;
  SiLU<S> out_act_;
  Conv2d<S> out_conv_;

  ParamRefs<S> params_;
  Mat<S> emb_;
  Mat<S> out_;
  std::vector<Mat<S>> skips_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<int>> dec_skip_idx_;
};

}  // namespace nn
}  // namespace idm
