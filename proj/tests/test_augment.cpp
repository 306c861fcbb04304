#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "augsens/augment.hpp"
#include "augsens/augsets.hpp"
#include "augsens/error.hpp"
#include "augsens/rng.hpp"
#include "test_util.hpp"

using namespace augsens;
using augsens::testing::random_image;

namespace {

double linf(const Image& a, const Image& b) { return max_abs_diff(a.pixels, b.pixels); }

TransformSpec spec(TransformKind k, ParamMap p) { return {k, std::move(p)}; }

}  // namespace

TEST(Transforms, IdentityParamsAreExactNoOps) {
    const Image img = random_image(3, 16, 20, 1);
    for (TransformKind k : all_transform_kinds()) {
        EXPECT_EQ(apply_transform(img, identity_spec(k)), img) << to_string(k);
    }
    EXPECT_EQ(all_transform_kinds().size(), kTransformKindCount);
}

TEST(Transforms, HFlipInvolution) {
    const Image img = random_image(3, 9, 14, 2);
    const auto f = spec(TransformKind::HFlip, {{"apply", 1.0}});
    EXPECT_EQ(apply_transform(apply_transform(img, f), f), img);
    EXPECT_NE(apply_transform(img, f), img);
    EXPECT_EQ(apply_transform(img, f).at(1, 3, 0), img.at(1, 3, 13));
}

TEST(Transforms, GrayscaleIdempotent) {
    const Image img = random_image(3, 12, 12, 3);
    const auto g = spec(TransformKind::Grayscale, {{"apply", 1.0}});
    const Image once = apply_transform(img, g);
    EXPECT_EQ(apply_transform(once, g), once);
    for (std::size_t y = 0; y < 12; ++y) {
        EXPECT_EQ(once.at(0, y, 5), once.at(1, y, 5));
        EXPECT_EQ(once.at(1, y, 5), once.at(2, y, 5));
        const double expect = 0.299 * img.at(0, y, 5) + 0.587 * img.at(1, y, 5) + 0.114 * img.at(2, y, 5);
        EXPECT_NEAR(once.at(0, y, 5), expect, 1e-6);
    }
}

TEST(Transforms, RollingPeriodAndInverse) {
    const Image img = random_image(3, 10, 13, 4);
    const auto full = spec(TransformKind::Rolling, {{"dy", 10.0}, {"dx", 13.0}});
    EXPECT_EQ(apply_transform(img, full), img);
    const auto a = spec(TransformKind::Rolling, {{"dy", 3.0}, {"dx", 5.0}});
    const auto b = spec(TransformKind::Rolling, {{"dy", 7.0}, {"dx", 8.0}});
    const Image rolled = apply_transform(img, a);
    EXPECT_EQ(rolled.at(2, 3, 5), img.at(2, 0, 0));
    EXPECT_EQ(apply_transform(rolled, b), img);
}

TEST(Transforms, EraseFillsZeros) {
    const Image img = random_image(3, 8, 8, 5);
    const Image all = apply_transform(img, spec(TransformKind::Erase, {{"cx", 0.5}, {"cy", 0.5}, {"w", 1.0}, {"h", 1.0}}));
    EXPECT_TRUE(std::all_of(all.pixels.data().begin(), all.pixels.data().end(), [](float v) { return v == 0.0f; }));
    const auto e = spec(TransformKind::Erase, {{"cx", 0.25}, {"cy", 0.5}, {"w", 0.5}, {"h", 0.5}});
    const Image part = apply_transform(img, e);
    EXPECT_EQ(part.at(0, 3, 1), 0.0f);
    EXPECT_EQ(part.at(0, 3, 6), img.at(0, 3, 6));
    EXPECT_EQ(apply_transform(part, e), part);
}

TEST(Transforms, SharpnessUnitFactorIsIdentity) {
    const Image img = random_image(3, 8, 8, 6);
    EXPECT_EQ(apply_transform(img, spec(TransformKind::Sharpness, {{"apply", 1.0}, {"factor", 1.0}})), img);
    EXPECT_NE(apply_transform(img, spec(TransformKind::Sharpness, {{"apply", 1.0}, {"factor", kSharpnessFactor}})), img);
}

TEST(Transforms, OutOfSupportRejected) {
    const Image img = random_image(3, 8, 8, 7);
    EXPECT_THROW(apply_transform(img, spec(TransformKind::Hue, {{"shift", 0.7}})), DomainError);
    EXPECT_THROW(apply_transform(img, spec(TransformKind::HFlip, {{"apply", 0.5}})), DomainError);
    EXPECT_THROW(apply_transform(img, spec(TransformKind::Rolling, {{"dy", 0.5}, {"dx", 0.0}})), DomainError);
    EXPECT_THROW(apply_transform(img, spec(TransformKind::Erase, {{"cx", 0.5}})), DomainError);
}

TEST(Transforms, OutputRangeOnCornerImages) {
    const std::vector<Image> imgs{Image(3, 12, 12, 0.0f), Image(3, 12, 12, 1.0f), random_image(3, 12, 12, 8)};
    const std::vector<TransformSpec> specs{
        spec(TransformKind::Erase, {{"cx", 0.3}, {"cy", 0.6}, {"w", 0.3}, {"h", 0.2}}),
        spec(TransformKind::Sharpness, {{"apply", 1.0}, {"factor", 3.0}}),
        spec(TransformKind::Rolling, {{"dy", 4.0}, {"dx", -3.0}}),
        spec(TransformKind::Grayscale, {{"apply", 1.0}}),
        spec(TransformKind::GaussianBlur, {{"sigma", 1.7}}),
        spec(TransformKind::Brightness, {{"factor", 1.5}}),
        spec(TransformKind::Contrast, {{"factor", 1.5}}),
        spec(TransformKind::Saturation, {{"factor", 1.5}}),
        spec(TransformKind::Hue, {{"shift", 0.1}}),
        spec(TransformKind::HFlip, {{"apply", 1.0}}),
        spec(TransformKind::RotateCrop, {{"angle", 25.0}}),
        spec(TransformKind::EllipticBlur, {{"cx", 0.5}, {"cy", 0.4}, {"a", 0.3}, {"b", 0.2}, {"sigma", 2.0}}),
    };
    for (const auto& img : imgs) {
        for (const auto& s : specs) {
            const Image out = apply_transform(img, s);
            EXPECT_EQ(out.pixels.shape(), img.pixels.shape());
            for (float v : out.pixels.data()) {
                ASSERT_GE(v, 0.0f) << to_string(s.kind);
                ASSERT_LE(v, 1.0f) << to_string(s.kind);
            }
        }
    }
}

TEST(Compose, OrderMattersForEraseAndRotate) {
    const Image img = random_image(3, 24, 24, 9);
    const std::vector<TransformSpec> specs{
        spec(TransformKind::Erase, {{"cx", 0.3}, {"cy", 0.3}, {"w", 0.3}, {"h", 0.3}}),
        spec(TransformKind::RotateCrop, {{"angle", 30.0}}),
    };
    const std::vector<std::size_t> er{0, 1}, re{1, 0};
    EXPECT_GT(linf(compose_ordered(img, specs, er), compose_ordered(img, specs, re)), 0.0);
}

TEST(Compose, IdentitySpecsAnyOrder) {
    const Image img = random_image(3, 10, 10, 10);
    std::vector<TransformSpec> specs;
    for (TransformKind k : all_transform_kinds()) specs.push_back(identity_spec(k));
    std::vector<std::size_t> order(specs.size());
    std::iota(order.begin(), order.end(), 0);
    EXPECT_EQ(compose_ordered(img, specs, order), img);
    std::reverse(order.begin(), order.end());
    EXPECT_EQ(compose_ordered(img, specs, order), img);
    const std::vector<std::size_t> short_order{0};
    EXPECT_THROW(compose_ordered(img, specs, short_order), ArityError);
}

TEST(Compose, CommutingPairAgrees) {
    const std::vector<TransformSpec> specs{spec(TransformKind::Brightness, {{"factor", 0.8}}),
                                           spec(TransformKind::HFlip, {{"apply", 1.0}})};
    const std::vector<std::size_t> ab{0, 1}, ba{1, 0};
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Image img = random_image(3, 11, 9, 100 + s);
        EXPECT_LE(linf(compose_ordered(img, specs, ab), compose_ordered(img, specs, ba)), 1e-6);
    }
}

TEST(Hsv, Anchors) {
    Image red(3, 1, 1);
    red.at(0, 0, 0) = 1.0f;
    const Image h = rgb_to_hsv(red);
    EXPECT_FLOAT_EQ(h.at(0, 0, 0), 0.0f);
    EXPECT_FLOAT_EQ(h.at(1, 0, 0), 1.0f);
    EXPECT_FLOAT_EQ(h.at(2, 0, 0), 1.0f);
    Image gray(3, 1, 1, 0.37f);
    const Image g = rgb_to_hsv(gray);
    EXPECT_EQ(g.at(1, 0, 0), 0.0f);
    EXPECT_FLOAT_EQ(g.at(2, 0, 0), 0.37f);
}

TEST(Hsv, RoundTrip) {
    double worst = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Image img = random_image(3, 8, 8, 200 + s);
        worst = std::max(worst, linf(hsv_to_rgb(rgb_to_hsv(img)), img));
    }
    EXPECT_LE(worst, 1e-5);
}

TEST(ChannelRepeat, CopiesOnePlane) {
    const Image hsv = rgb_to_hsv(random_image(3, 6, 7, 11));
    const Image v3 = channel_repeat(hsv, 2, 3);
    EXPECT_EQ(v3.semantics, ChannelSemantics::ReplicatedSingle);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < 6; ++y) {
            for (std::size_t x = 0; x < 7; ++x) EXPECT_EQ(v3.at(c, y, x), hsv.at(2, y, x));
        }
    }
    EXPECT_EQ(channel_repeat(hsv, 0, 1).channels(), 1u);
}

TEST(GaussianBlur, KernelAndMeanPreservation) {
    for (double sigma : {0.5, 1.0, 2.3, 3.0}) {
        const auto k = gaussian_kernel(sigma);
        EXPECT_EQ(k.size(), 2 * static_cast<std::size_t>(std::ceil(3 * sigma)) + 1);
        EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-9);
        const Image img = random_image(3, 16, 16, 12);
        const Image out = gaussian_blur(img, sigma, Boundary::Cyclic);
        const auto mean = [](const Image& i) {
            return std::accumulate(i.pixels.data().begin(), i.pixels.data().end(), 0.0) / static_cast<double>(i.pixels.size());
        };
        EXPECT_NEAR(mean(out), mean(img), 1e-6);
    }
}

TEST(AugmentationSets, A0IsInertAndA1Gated) {
    AugmentationOptions o;
    const auto a0 = make_augmentation_set("A0", o);
    EXPECT_TRUE(a0.inert);
    const auto img = random_image(3, 32, 32, 13);
    StreamEngine rng(1, stream_id(1));
    std::vector<double> u(a0.space.dimension());
    for (double& x : u) x = rng.uniform();
    EXPECT_EQ(a0.apply(img, decode(a0.space, u)), img);
    EXPECT_EQ(augmentation_set_kinds("A1").size(), 5u);
    EXPECT_EQ(augmentation_set_kinds("A2").size(), 7u);
    EXPECT_THROW(augmentation_set_kinds("A9"), DomainError);

    o.scheme = Scheme::SpikeSlab;
    const auto a1 = make_augmentation_set("A1", o);
    Realization r = scheme2_decode(a1.space, std::vector<double>(a1.space.dimension(), 0.0));
    for (int g : r.gates) EXPECT_EQ(g, 0);
    EXPECT_EQ(a1.apply(img, r), img);
}
