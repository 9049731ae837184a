#include <gtest/gtest.h>

#include "turbo_twin/critics.hpp"
#include "turbo_twin/error.hpp"

using namespace turbo;

namespace {

struct Layer {
  int kernel, stride, padding;
};

// Standard 70x70 patch layout written out layer by layer.
const std::vector<Layer> kStandardPatch = {{4, 2, 1}, {4, 2, 1}, {4, 2, 1}, {4, 1, 1}, {4, 1, 1}};

int out_size(int in, const std::vector<Layer>& layers) {
  for (const auto& l : layers) in = (in + 2 * l.padding - l.kernel) / l.stride + 1;
  return in;
}

int receptive_field(const std::vector<Layer>& layers) {
  int rf = 1, jump = 1;
  for (const auto& l : layers) {
    rf += (l.kernel - 1) * jump;
    jump *= l.stride;
  }
  return rf;
}

CriticSpec tiny(CriticKind kind, bool normalize = true) {
  CriticSpec spec;
  spec.kind = kind;
  spec.base_width = 4;
  spec.normalize = normalize;
  return spec;
}

}  // namespace

TEST(PatchCritic, Map30x30On256) {
  ASSERT_EQ(out_size(256, kStandardPatch), 30);
  ASSERT_EQ(receptive_field(kStandardPatch), 70);
  auto critic = build_critic(tiny(CriticKind::patch), 0);
  torch::NoGradGuard ng;
  auto s = critic(torch::rand({2, 1, 256, 256}));
  EXPECT_EQ(s.sizes(), (std::vector<int64_t>{2, 1, 30, 30}));
}

TEST(PatchCritic, MapSmallerThanInputForSeveralSizes) {
  auto critic = build_critic(tiny(CriticKind::patch), 0);
  torch::NoGradGuard ng;
  for (int side : {32, 64, 70, 128}) {
    auto s = critic(torch::rand({1, 1, side, side}));
    EXPECT_EQ(s.size(2), out_size(side, kStandardPatch)) << side;
    EXPECT_LT(s.size(2), side);
  }
}

TEST(PatchCritic, Locality) {
  // Without instance normalization each score only sees its receptive field.
  auto critic = build_critic(tiny(CriticKind::patch, false), 2);
  critic.to(torch::kFloat64);
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 1, 64, 64}, torch::kFloat64);
  auto base = critic(x);
  const int r = 5, c = 40;
  auto y = x.clone();
  y[0][0][r][c] += 1.0;
  auto changed = (critic(y) - base).abs() > 1e-12;

  // Output (i, j) covers input rows [i*8 - 23, i*8 - 23 + 69].
  int jump = 1, offset = 0;
  for (const auto& l : kStandardPatch) {
    offset += l.padding * jump;
    jump *= l.stride;
  }
  const int rf = receptive_field(kStandardPatch);
  for (int i = 0; i < changed.size(2); ++i) {
    for (int j = 0; j < changed.size(3); ++j) {
      const bool covers = r >= i * jump - offset && r < i * jump - offset + rf && c >= j * jump - offset &&
                          c < j * jump - offset + rf;
      if (!covers) {
        EXPECT_FALSE(changed[0][0][i][j].item<bool>()) << i << "," << j;
      }
    }
  }
  EXPECT_TRUE(changed.any().item<bool>());
}

TEST(ImageCritic, OneScalarPerImage) {
  auto critic = build_critic(tiny(CriticKind::image), 0);
  torch::NoGradGuard ng;
  auto s = critic(torch::rand({3, 1, 256, 256}));
  EXPECT_EQ(s.sizes(), (std::vector<int64_t>{3, 1}));
  EXPECT_EQ(per_sample_scores(s).sizes(), (std::vector<int64_t>{3}));
}

TEST(ImageCritic, DifferentSeedsDiffer) {
  auto a = build_critic(tiny(CriticKind::image), 1);
  auto b = build_critic(tiny(CriticKind::image), 2);
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 1, 64, 64});
  EXPECT_NE(a(x).item<double>(), b(x).item<double>());
}

TEST(Critic, InputGradientNonzero) {
  for (CriticKind kind : {CriticKind::patch, CriticKind::image}) {
    auto critic = build_critic(tiny(kind), 3);
    auto x = torch::rand({2, 1, 64, 64}).requires_grad_(true);
    auto g = torch::autograd::grad({critic(x).mean()}, {x})[0];
    EXPECT_GT(g.abs().sum().item<double>(), 0.0) << to_string(kind);
  }
}

TEST(Critic, TooSmallInputIsShapeError) {
  auto critic = build_critic(tiny(CriticKind::patch), 0);
  try {
    critic(torch::rand({1, 1, 16, 16}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeError);
  }
}

TEST(Critic, InvalidSpec) {
  CriticSpec spec = tiny(CriticKind::image);
  spec.base_width = 0;
  try {
    build_critic(spec, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
  }
}

TEST(Critic, WganDisablesNormalization) {
  TurboConfig cfg;
  cfg.gan_loss = GanLoss::wgan_gp;
  cfg.critic_kind = CriticKind::image;
  EXPECT_FALSE(critic_spec(cfg).normalize);
  cfg.gan_loss = GanLoss::lsgan;
  EXPECT_TRUE(critic_spec(cfg).normalize);
}

TEST(Critic, ArchiveRoundTrip) {
  auto critic = build_critic(tiny(CriticKind::image), 4);
  auto back = critic_from_archive(critic_archive(critic));
  EXPECT_EQ(back.spec(), critic.spec());
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 1, 32, 32});
  EXPECT_TRUE(torch::equal(back(x), critic(x)));
}
