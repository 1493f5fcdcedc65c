#include <cmath>
#include <numbers>

#include "doctest.h"
#include "planevol/field.hpp"
#include "planevol/rng.hpp"

using namespace planevol;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed) {
    Image img(w, h, c);
    CounterRng rng(seed);
    for (double& v : img.data()) v = rng.uniform();
    return img;
}

void fill_normal(std::span<double> v, double scale, std::uint64_t seed) {
    CounterRng rng(seed);
    for (double& x : v) x = scale * rng.normal();
}

// Five-point central difference of f around store value (block, idx).
template <typename Fn>
double numeric_grad(ParameterStore& store, std::size_t block, std::size_t idx, Fn&& f) {
    double& theta = store.values(block)[idx];
    const double saved = theta;
    const double h = 1e-3;
    auto at = [&](double o) {
        theta = saved + o;
        return f();
    };
    const double g = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
    theta = saved;
    return g;
}

bool grad_close(double analytic, double numeric) {
    const double err = std::abs(analytic - numeric);
    return err <= 1e-10 || err / std::max(std::abs(analytic), std::abs(numeric)) < 1e-4;
}

}  // namespace

TEST_SUITE("field") {
    TEST_CASE("plane depths are uniform in disparity") {
        const auto two = plane_depths(1, 2, 2);
        CHECK(two == std::vector<double>{1.0, 2.0});
        const auto three = plane_depths(1, 2, 3);
        REQUIRE(three.size() == 3);
        CHECK(three[0] == 1.0);
        CHECK(three[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
        CHECK(three[2] == 2.0);
        CounterRng rng(5);
        for (int i = 0; i < 50; ++i) {
            const double near = 0.1 + rng.uniform();
            const double far = near + 0.01 + 10 * rng.uniform();
            const auto d = plane_depths(near, far, 2 + static_cast<int>(rng.below(60)));
            for (std::size_t k = 1; k < d.size(); ++k) CHECK(d[k] > d[k - 1]);
        }
        CHECK_THROWS_AS(plane_depths(2, 1, 4), DomainError);
        CHECK_THROWS_AS(plane_depths(1, 2, 1), DomainError);
    }

    TEST_CASE("default planes land on the preset layer depths") {
        const auto d = plane_depths(1.0, 40.0 / 9.0, 32);
        for (double z : {1.0, 1.25, 1.6, 2.0, 2.5, 4.0}) {
            bool found = false;
            for (double p : d) found = found || std::abs(p - z) <= 1e-12 * z;
            CHECK(found);
        }
    }

    TEST_CASE("mpi lookup") {
        MultiPlaneImage mpi(plane_depths(1, 4, 3), 5, 4);
        CounterRng rng(11);
        for (double& v : mpi.values()) v = rng.uniform();
        const RadianceSample node = sample_mpi(mpi, 1, 2, 3);
        for (int c = 0; c < 3; ++c) CHECK(node.rgb[c] == mpi.at(1, 2, 3, c));
        CHECK(node.sigma == mpi.at(1, 2, 3, 3));

        const RadianceSample mid = sample_mpi(mpi, 2, 1.5, 2);
        for (int c = 0; c < 3; ++c) {
            CHECK(mid.rgb[c] == doctest::Approx(0.5 * (mpi.at(2, 1, 2, c) + mpi.at(2, 2, 2, c))).epsilon(1e-15));
        }
        CHECK(mid.sigma == doctest::Approx(0.5 * (mpi.at(2, 1, 2, 3) + mpi.at(2, 2, 2, 3))).epsilon(1e-15));

        const RadianceSample out = sample_mpi(mpi, 0, -5, 0);
        CHECK(out.rgb == std::array<double, 3>{0, 0, 0});
        CHECK(out.sigma == 0.0);
    }

    TEST_CASE("mpi intervals repeat the mean spacing at the back") {
        MultiPlaneImage mpi(plane_depths(1, 2, 3), 2, 2);
        const auto iv = mpi.intervals();
        REQUIRE(iv.size() == 3);
        CHECK(iv[0] == doctest::Approx(1.0 / 3.0));
        CHECK(iv[1] == doctest::Approx(2.0 / 3.0));
        CHECK(iv[2] == doctest::Approx(0.5));
        CHECK(mpi.mean_spacing() == doctest::Approx(0.5));
    }

    TEST_CASE("positional encoding") {
        const auto zero = positional_encoding(Vec3::Zero());
        REQUIRE(zero.size() == 63);
        for (int i = 0; i < 3; ++i) CHECK(zero[i] == 0.0);
        for (int l = 0; l < kPositionFrequencies; ++l) {
            for (int i = 0; i < 3; ++i) {
                CHECK(zero[3 + 6 * l + i] == 0.0);
                CHECK(zero[3 + 6 * l + 3 + i] == 1.0);
            }
        }
        CounterRng rng(2);
        for (int k = 0; k < 10; ++k) {
            CHECK(positional_encoding(Vec3(rng.normal(), rng.normal(), rng.normal())).size() == 63);
        }
        const auto half_pi = positional_encoding(Vec3(std::numbers::pi / 2, 0, 0));
        CHECK(std::abs(half_pi[3 + 6 * 1]) < 1e-12);  // sin(2^1 * pi / 2)
        CHECK(half_pi[3] == doctest::Approx(1.0).epsilon(1e-15));  // sin(pi / 2)
        CHECK(positional_encoding(Vec3(1, 2, 3), kDirectionFrequencies).size() == 27);
    }

    TEST_CASE("positional encoding backward matches finite differences") {
        const Vec3 p(0.3, -0.2, 1.1);
        std::vector<double> w(63);
        fill_normal(w, 1.0, 9);
        auto f = [&](const Vec3& q) {
            const auto e = positional_encoding(q);
            double s = 0;
            for (std::size_t i = 0; i < e.size(); ++i) s += w[i] * e[i];
            return s;
        };
        const Vec3 g = positional_encoding_backward(p, kPositionFrequencies, w);
        for (int i = 0; i < 3; ++i) {
            Vec3 up = p, dn = p;
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            CHECK(g[i] == doctest::Approx((f(up) - f(dn)) / 2e-6).epsilon(1e-6));
        }
    }

    TEST_CASE("feature extractor shapes and linearity") {
        ParameterStore store;
        const FeatureExtractor fx(store, ParamGroup::fine, 6);
        const FeatureMap zero = fx.forward(store, Image(7, 5, 3));
        CHECK(zero.width() == 7);
        CHECK(zero.height() == 5);
        CHECK(zero.channels() == kFeatureChannels);
        for (double v : zero.data()) CHECK(v == 0.0);

        fx.initialize(store, 3);
        for (std::size_t b = 0; b < store.block_count(); ++b) {
            if (store.block(b).name.find("bias") != std::string::npos) {
                for (double& v : store.values(b)) v = 0.0;
            }
        }
        const FeatureMap f = fx.forward(store, Image(7, 5, 3));
        for (double v : f.data()) CHECK(v == 0.0);
    }

    TEST_CASE("feature extractor gradients") {
        ParameterStore store;
        const FeatureExtractor fx(store, ParamGroup::fine, 5);
        fx.initialize(store, 4);
        const Image img = random_image(6, 5, 3, 8);
        Image weight(6, 5, kFeatureChannels);
        fill_normal(weight.data(), 1.0, 10);
        auto loss = [&] {
            const FeatureMap f = fx.forward(store, img);
            double s = 0;
            for (std::size_t i = 0; i < f.size(); ++i) s += weight.data()[i] * f.data()[i];
            return s;
        };
        FeatureExtractor::Tape tape;
        fx.forward(store, img, &tape);
        Gradients g(store);
        fx.backward(store, tape, weight, g);
        CounterRng pick(12);
        for (std::size_t b = 0; b < store.block_count(); ++b) {
            for (int k = 0; k < 6; ++k) {
                const auto idx = pick.below(store.block(b).size());
                CHECK(grad_close(g.block(b)[idx], numeric_grad(store, b, idx, loss)));
            }
        }
    }

    TEST_CASE("decoder input width and zero final layer") {
        CHECK(FineDecoder::kInputWidth == 150);
        ParameterStore store;
        const FineDecoder dec(store, ParamGroup::fine);
        dec.initialize(store, 1);
        for (double& v : store.values(dec.weight_block(FineDecoder::kLayers - 1))) v = 0.0;
        for (double& v : store.values(dec.bias_block(FineDecoder::kLayers - 1))) v = 0.0;
        std::vector<double> feature(kFeatureChannels, 0.3);
        const RadianceSample s = fine_decode(dec, store, Vec3(0.1, 0.2, 2.0), Vec3(0, 0, 1), feature);
        for (double c : s.rgb) CHECK(c == 0.5);
        CHECK(s.sigma == doctest::Approx(std::log(2.0)).epsilon(1e-15));

        CHECK_THROWS_AS(fine_decode(dec, store, Vec3::Zero(), Vec3(0, 0, 1), std::vector<double>(59)), DomainError);
        CHECK_THROWS_AS(fine_decode(dec, store, Vec3::Zero(), Vec3(0, 0, 2), feature), DomainError);
    }

    TEST_CASE("decoder gradients") {
        ParameterStore store;
        const FineDecoder dec(store, ParamGroup::fine);
        dec.initialize(store, 2, 0.0);
        const Eigen::Index n = 5;
        Eigen::MatrixXd in(FineDecoder::kInputWidth, n);
        CounterRng rng(4);
        for (Eigen::Index j = 0; j < n; ++j) {
            std::vector<double> feat(kFeatureChannels);
            fill_normal(feat, 0.5, 20 + j);
            const Vec3 d = Vec3(rng.normal(), rng.normal(), 3.0).normalized();
            build_decoder_input(Vec3(rng.normal(), rng.normal(), 2.0), d, feat,
                                {in.col(j).data(), FineDecoder::kInputWidth});
        }
        Eigen::MatrixXd w(4, n);
        fill_normal({w.data(), static_cast<std::size_t>(w.size())}, 1.0, 30);
        auto loss = [&] { return (dec.forward(store, in).array() * w.array()).sum(); };
        FineDecoder::Tape tape;
        dec.forward(store, in, &tape);
        Gradients g(store);
        Eigen::MatrixXd gin;
        dec.backward(store, tape, w, g, &gin);
        CounterRng pick(13);
        for (std::size_t b = 0; b < store.block_count(); ++b) {
            for (int k = 0; k < 4; ++k) {
                const auto idx = pick.below(store.block(b).size());
                CHECK(grad_close(g.block(b)[idx], numeric_grad(store, b, idx, loss)));
            }
        }
        // Input gradient, one column.
        for (int k = 0; k < 5; ++k) {
            const auto r = static_cast<Eigen::Index>(pick.below(FineDecoder::kInputWidth));
            const double saved = in(r, 2);
            in(r, 2) = saved + 1e-5;
            const double up = loss();
            in(r, 2) = saved - 1e-5;
            const double dn = loss();
            in(r, 2) = saved;
            CHECK(grad_close(gin(r, 2), (up - dn) / 2e-5));
        }
    }

    TEST_CASE("decoder results do not depend on the batch") {
        ParameterStore store;
        const FineDecoder dec(store, ParamGroup::fine);
        dec.initialize(store, 5);
        Eigen::MatrixXd in(FineDecoder::kInputWidth, 200);
        fill_normal({in.data(), static_cast<std::size_t>(in.size())}, 1.0, 3);
        const Eigen::MatrixXd all = dec.forward(store, in);
        const Eigen::MatrixXd one = dec.forward(store, in.col(150));
        CHECK((all.col(150) - one.col(0)).cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("fresh direct mpi") {
        ParameterStore store;
        const auto depths = plane_depths(1, 40.0 / 9.0, 32);
        const MpiPredictor pred(store, MpiMode::direct, depths, 6, 5);
        pred.initialize(store, 1);
        const MultiPlaneImage mpi = pred.predict(store, nullptr);
        const double expected = -std::log1p(-1.0 / 32) / mpi.mean_spacing();
        for (int k = 0; k < 32; ++k) {
            for (int y = 0; y < 5; ++y) {
                for (int x = 0; x < 6; ++x) {
                    for (int c = 0; c < 3; ++c) CHECK(mpi.at(k, x, y, c) == 0.5);
                    CHECK(mpi.at(k, x, y, 3) == doctest::Approx(expected).epsilon(1e-12));
                }
            }
        }
    }

    TEST_CASE("feedforward mpi shape and gradients") {
        ParameterStore store;
        const auto depths = plane_depths(1, 4, 32);
        const MpiPredictor pred(store, MpiMode::feedforward, depths, 3, 2);
        pred.initialize(store, 2);
        for (double& v : store.values(store.find("mpi_head.weight"))) v *= 20.0;
        FeatureMap feat(3, 2, kFeatureChannels);
        fill_normal(feat.data(), 1.0, 40);
        std::vector<double> raw;
        const MultiPlaneImage mpi = pred.predict(store, &feat, &raw);
        CHECK(mpi.planes() == 32);
        CHECK(mpi.values().size() == 32u * 2 * 3 * 4);
        CHECK_FALSE(pred.uses_grid(store));

        std::vector<double> w(mpi.values().size());
        fill_normal(w, 1.0, 41);
        auto loss = [&] {
            const MultiPlaneImage m = pred.predict(store, &feat);
            double s = 0;
            for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * m.values()[i];
            return s;
        };
        Gradients g(store);
        FeatureMap gfeat(3, 2, kFeatureChannels);
        pred.backward(store, &feat, raw, w, g, &gfeat);
        CounterRng pick(14);
        for (const char* name : {"mpi_head.weight", "mpi_head.bias"}) {
            const std::size_t b = store.find(name);
            for (int k = 0; k < 8; ++k) {
                const auto idx = pick.below(store.block(b).size());
                CHECK(grad_close(g.block(b)[idx], numeric_grad(store, b, idx, loss)));
            }
        }
        for (int k = 0; k < 6; ++k) {
            const auto idx = pick.below(feat.size());
            const double saved = feat.data()[idx];
            feat.data()[idx] = saved + 1e-5;
            const double up = loss();
            feat.data()[idx] = saved - 1e-5;
            const double dn = loss();
            feat.data()[idx] = saved;
            CHECK(grad_close(gfeat.data()[idx], (up - dn) / 2e-5));
        }

        pred.materialize(store, feat);
        CHECK(pred.uses_grid(store));
        const MultiPlaneImage frozen = pred.predict(store, nullptr);
        for (std::size_t i = 0; i < frozen.values().size(); ++i) CHECK(frozen.values()[i] == mpi.values()[i]);
    }

    TEST_CASE("mode names") {
        CHECK(mpi_mode_from_string("direct") == MpiMode::direct);
        CHECK(mpi_mode_from_string(to_string(MpiMode::feedforward)) == MpiMode::feedforward);
        CHECK_THROWS_AS(mpi_mode_from_string("dense"), DomainError);
    }
}
