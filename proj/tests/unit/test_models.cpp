#include <cmath>

#include "doctest.h"
#include "support/oracles.hpp"
#include "vaentropy/errors.hpp"
#include "vaentropy/models/vae.hpp"

using namespace vaentropy;
using namespace vaentropy::models;

namespace {

Architecture arch_of(ModelKind kind, std::size_t h, std::size_t d, bool shared = true)
{
    Architecture a;
    a.kind = kind;
    a.latent_dim = h;
    a.data_dim = d;
    a.encoder_hidden = {7, 5};
    a.decoder_hidden = {6};
    a.shared_encoder_trunk = shared;
    if (kind == ModelKind::linear) a.encoder_hidden = a.decoder_hidden = {};
    return a;
}

Tensor random_matrix(std::size_t r, std::size_t c, oracle::SplitMix& rng)
{
    Tensor t({r, c});
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

// Replaces every network in `m` by one drawn away from relu kinks on `x`/`z`.
void randomize(VaeModel& m, const Tensor& x, const Tensor& z, oracle::SplitMix& rng)
{
    auto redraw = [&](MlpNetwork& net, const Tensor& in) {
        std::vector<std::size_t> widths{net.layer(0).in_dim()};
        for (std::size_t l = 0; l < net.depth(); ++l) widths.push_back(net.layer(l).out_dim());
        net = oracle::random_net(widths, in, rng, 0.7);
    };
    redraw(m.mutable_encoder_net(), x);
    redraw(m.mutable_decoder_mu_net(), z);
    if (m.kind() == ModelKind::vae3) redraw(m.mutable_decoder_sigma_net(), z);
}

}  // namespace

TEST_CASE("architecture validation")
{
    CHECK(parse_model_kind("vae3") == ModelKind::vae3);
    CHECK_THROWS_AS(parse_model_kind("vae2"), ConfigError);
    Architecture a = arch_of(ModelKind::vae3, 2, 4);
    a.decoder_hidden = {};
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a.latent_dim = 0;
    CHECK_THROWS(a.validate());
}

TEST_CASE("encode examples")
{
    SUBCASE("zero linear encoder gives the prior")
    {
        VaeModel m(arch_of(ModelKind::linear, 2, 3));
        const auto enc = m.encode(Tensor::matrix({{1, -2, 3}, {0.5, 9, -4}}));
        for (std::size_t i = 0; i < enc.nu.size(); ++i) {
            CHECK(enc.nu[i] == 0.0);
            CHECK(std::exp(enc.log_tau2[i]) == 1.0);
        }
    }
    SUBCASE("linear encoder is V (x - mu0) with x-free variances")
    {
        VaeModel m(arch_of(ModelKind::linear, 1, 2));
        auto p = m.params();
        p.at("lin.V") = Tensor::matrix({{2, -1}});
        p.at("lin.mu0") = Tensor::vector({1, 1});
        p.at("lin.log_tau2") = Tensor::vector({-0.7});
        m.set_params(p);
        const auto enc = m.encode(Tensor::matrix({{3, 5}, {0, 0}}));
        CHECK(enc.nu(0, 0) == doctest::Approx(0.0));
        CHECK(enc.nu(1, 0) == doctest::Approx(-1.0));
        CHECK(enc.log_tau2(0, 0) == -0.7);
        CHECK(enc.log_tau2(1, 0) == -0.7);
    }
    SUBCASE("vae1 zero final head yields its bias")
    {
        for (bool shared : {true, false}) {
            VaeModel m(arch_of(ModelKind::vae1, 2, 3, shared));
            auto p = m.params();
            if (shared) {
                p.at("enc.l2.bias") = Tensor::vector({0.3, -0.4, 1.5, -2.0});
            } else {
                p.at("enc_nu.l2.bias") = Tensor::vector({0.3, -0.4});
                p.at("enc_tau.l2.bias") = Tensor::vector({1.5, -2.0});
            }
            m.set_params(p);
            const auto enc = m.encode(Tensor::matrix({{1, 2, 3}}));
            CHECK(enc.nu(0, 0) == 0.3);
            CHECK(enc.nu(0, 1) == -0.4);
            CHECK(std::exp(enc.log_tau2(0, 0)) == doctest::Approx(std::exp(1.5)).epsilon(1e-15));
            CHECK(std::exp(enc.log_tau2(0, 1)) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
        }
    }
    SUBCASE("seeded vae1 encoder matches the loop oracle")
    {
        oracle::SplitMix rng(11);
        const Tensor x = random_matrix(6, 4, rng);
        const Tensor z = random_matrix(6, 2, rng);
        VaeModel m(arch_of(ModelKind::vae1, 2, 4));
        randomize(m, x, z, rng);
        const auto enc = m.encode(x);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const auto row = oracle::mlp_row(m.encoder_net(), x.row(r));
            for (std::size_t h = 0; h < 2; ++h) {
                CHECK(enc.nu(r, h) == doctest::Approx(row[h]).epsilon(1e-13));
                CHECK(enc.log_tau2(r, h) == doctest::Approx(row[2 + h]).epsilon(1e-13));
            }
        }
    }
    SUBCASE("shape mismatch")
    {
        VaeModel m(arch_of(ModelKind::vae1, 2, 3));
        CHECK_THROWS_AS(m.encode(Tensor({1, 4})), ShapeError);
        CHECK_THROWS_AS(m.decode(Tensor({1, 3})), ShapeError);
    }
}

TEST_CASE("decode examples")
{
    SUBCASE("linear W = 0 gives mu0")
    {
        VaeModel m(arch_of(ModelKind::linear, 2, 3));
        auto p = m.params();
        p.at("lin.mu0") = Tensor::vector({1, -2, 0.5});
        m.set_params(p);
        const auto dec = m.decode(Tensor::matrix({{3, 4}, {-1, 100}}));
        for (std::size_t r = 0; r < 2; ++r) {
            CHECK(dec.mu(r, 0) == 1.0);
            CHECK(dec.mu(r, 1) == -2.0);
            CHECK(dec.mu(r, 2) == 0.5);
        }
        CHECK(dec.shared_variance);
        CHECK(dec.log_sigma2.size() == 1);
    }
    SUBCASE("vae3 zero sigma head gives unit variance")
    {
        oracle::SplitMix rng(3);
        VaeModel m(arch_of(ModelKind::vae3, 2, 3));
        const Tensor z = random_matrix(5, 2, rng);
        randomize(m, random_matrix(5, 3, rng), z, rng);
        auto& last = m.mutable_decoder_sigma_net().mutable_layer(1);
        last.weight = Tensor(last.weight.shape());
        last.bias = Tensor(last.bias.shape());
        const auto dec = m.decode(z);
        CHECK_FALSE(dec.shared_variance);
        for (double v : dec.log_sigma2.values()) CHECK(std::exp(v) == 1.0);
    }
    SUBCASE("seeded vae3 decoder matches the loop oracle")
    {
        oracle::SplitMix rng(4);
        const Tensor z = random_matrix(8, 3, rng);
        VaeModel m(arch_of(ModelKind::vae3, 3, 4));
        randomize(m, random_matrix(8, 4, rng), z, rng);
        const auto dec = m.decode(z);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            const auto mu = oracle::mlp_row(m.decoder_mu_net(), z.row(r));
            const auto ls = oracle::mlp_row(m.decoder_sigma_net(), z.row(r));
            for (std::size_t d = 0; d < 4; ++d) {
                CHECK(dec.mu(r, d) == doctest::Approx(mu[d]).epsilon(1e-13));
                CHECK(dec.log_sigma2(r, d) == doctest::Approx(ls[d]).epsilon(1e-13));
            }
        }
    }
    SUBCASE("vae3 has no scalar decoder variance")
    {
        VaeModel m(arch_of(ModelKind::vae3, 2, 3));
        CHECK_FALSE(m.params().contains("dec.log_sigma2"));
        CHECK_THROWS_AS(m.log_sigma2(), ConfigError);
    }
}

TEST_CASE("linear decode is exactly affine in z")
{
    oracle::SplitMix rng(21);
    VaeModel m(arch_of(ModelKind::linear, 3, 5));
    auto p = m.params();
    for (auto& v : p.at("lin.W").values()) v = rng.uniform(-2.0, 2.0);
    for (auto& v : p.at("lin.mu0").values()) v = rng.uniform(-2.0, 2.0);
    m.set_params(p);
    const Tensor& w = p.at("lin.W");
    const Tensor z = random_matrix(10, 3, rng);
    const auto dec = m.decode(z);
    for (std::size_t r = 0; r < z.rows(); ++r)
        for (std::size_t d = 0; d < 5; ++d) {
            double expect = p.at("lin.mu0")[d];
            for (std::size_t h = 0; h < 3; ++h) expect += w(d, h) * z(r, h);
            CHECK(dec.mu(r, d) == doctest::Approx(expect).epsilon(1e-14));
        }
    // Affinity: mu(a z1 + (1 - a) z2) = a mu(z1) + (1 - a) mu(z2).
    const double a = 0.3;
    Tensor mix({1, 3});
    for (std::size_t h = 0; h < 3; ++h) mix(0, h) = a * z(0, h) + (1 - a) * z(1, h);
    const auto dm = m.decode(mix);
    for (std::size_t d = 0; d < 5; ++d)
        CHECK(dm.mu(0, d) == doctest::Approx(a * dec.mu(0, d) + (1 - a) * dec.mu(1, d)).epsilon(1e-13));
}

TEST_CASE("batch evaluation equals row-by-row evaluation")
{
    for (ModelKind kind : {ModelKind::linear, ModelKind::vae1, ModelKind::vae3}) {
        for (bool shared : {true, false}) {
            oracle::SplitMix rng(static_cast<std::uint64_t>(kind) * 10 + shared);
            data::RngStream init(5, 2);
            VaeModel m(arch_of(kind, 2, 4, shared), init);
            const Tensor x = random_matrix(9, 4, rng);
            const Tensor z = random_matrix(9, 2, rng);
            const auto enc = m.encode(x);
            const auto dec = m.decode(z);
            for (std::size_t r = 0; r < 9; ++r) {
                const auto e1 = m.encode(x.slice_rows(r, r + 1));
                const auto d1 = m.decode(z.slice_rows(r, r + 1));
                for (std::size_t h = 0; h < 2; ++h) {
                    REQUIRE(e1.nu(0, h) == enc.nu(r, h));
                    REQUIRE(e1.log_tau2(0, h) == enc.log_tau2(r, h));
                }
                for (std::size_t d = 0; d < 4; ++d) {
                    REQUIRE(d1.mu(0, d) == dec.mu(r, d));
                    if (!dec.shared_variance) REQUIRE(d1.log_sigma2(0, d) == dec.log_sigma2(r, d));
                }
            }
        }
    }
}

TEST_CASE("log-variances are clamped")
{
    const Tensor c = clamp_log_variance(Tensor::vector({-50, -20, 3, 20, 1e9}));
    CHECK(c[0] == -20.0);
    CHECK(c[1] == -20.0);
    CHECK(c[2] == 3.0);
    CHECK(c[3] == 20.0);
    CHECK(c[4] == 20.0);

    VaeModel m(arch_of(ModelKind::vae1, 2, 3));
    auto p = m.params();
    p.at("enc.l2.bias") = Tensor::vector({0, 0, -80, 55});
    p.at("dec.log_sigma2") = Tensor::vector({-33});
    m.set_params(p);
    const auto enc = m.encode(Tensor({4, 3}, 1.0));
    for (std::size_t r = 0; r < 4; ++r) {
        CHECK(enc.log_tau2(r, 0) == -20.0);
        CHECK(enc.log_tau2(r, 1) == 20.0);
    }
    const auto dec = m.decode(Tensor({2, 2}));
    CHECK(dec.log_sigma2[0] == -20.0);
    CHECK(m.log_sigma2() == -33.0);  // the raw parameter is kept

    VaeModel m3(arch_of(ModelKind::vae3, 2, 3));
    auto p3 = m3.params();
    p3.at("dec_sigma.l1.bias") = Tensor::vector({100, -100, 0});
    m3.set_params(p3);
    const auto d3 = m3.decode(Tensor({3, 2}, 0.5));
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(d3.log_sigma2(r, 0) == 20.0);
        CHECK(d3.log_sigma2(r, 1) == -20.0);
    }
}

TEST_CASE("sample_latents")
{
    EncoderOutput enc{Tensor::matrix({{1.0, -2.0}}), Tensor::matrix({{-20.0, -20.0}})};
    SUBCASE("variance floor keeps z at nu")
    {
        data::RngStream rng(1, 4);
        const auto s = sample_latents(enc, 50, rng);
        for (std::size_t i = 0; i < 50; ++i) {
            CHECK(std::abs(s.z[i * 2] - 1.0) < 5e-5 * std::max(1.0, std::abs(s.eps[i * 2])));
            CHECK(std::abs(s.z[i * 2 + 1] + 2.0) < 5e-5 * std::max(1.0, std::abs(s.eps[i * 2 + 1])));
        }
    }
    SUBCASE("fixed eps reproduces z")
    {
        data::RngStream rng(2, 4);
        const Tensor eps = draw_eps(1, 7, 2, rng);
        const auto a = reparameterize(enc, eps);
        const auto b = reparameterize(enc, eps);
        CHECK(a.z == b.z);
        const EncoderOutput e2{Tensor::matrix({{0.5, 0.25}}), Tensor::matrix({{std::log(4.0), 0.0}})};
        const auto c = reparameterize(e2, eps);
        for (std::size_t s = 0; s < 7; ++s) {
            CHECK(c.z[s * 2] == 0.5 + 2.0 * eps[s * 2]);
            CHECK(c.z[s * 2 + 1] == 0.25 + eps[s * 2 + 1]);
        }
        CHECK(c.z_rows().rows() == 7);
    }
    SUBCASE("same stream gives same draws")
    {
        data::RngStream r1(9, 3), r2(9, 3);
        CHECK(sample_latents(enc, 4, r1).eps == sample_latents(enc, 4, r2).eps);
    }
    SUBCASE("unit posterior sample variance")
    {
        const EncoderOutput e{Tensor({1, 3}), Tensor({1, 3})};
        double mean_var = 0.0;
        constexpr int kSeeds = 4;
        for (int seed = 0; seed < kSeeds; ++seed) {
            data::RngStream rng(seed, 4);
            const auto s = sample_latents(e, 100000, rng);
            for (std::size_t h = 0; h < 3; ++h) {
                double m = 0.0, q = 0.0;
                for (std::size_t i = 0; i < 100000; ++i) m += s.z[i * 3 + h];
                m /= 100000.0;
                for (std::size_t i = 0; i < 100000; ++i) q += (s.z[i * 3 + h] - m) * (s.z[i * 3 + h] - m);
                const double var = q / 99999.0;
                CHECK(var > 0.98);
                CHECK(var < 1.02);
                mean_var += var / (3 * kSeeds);
            }
        }
        CHECK(mean_var == doctest::Approx(1.0).epsilon(0.01));
    }
    SUBCASE("samples must be positive")
    {
        data::RngStream rng(0, 4);
        CHECK_THROWS_AS(sample_latents(enc, 0, rng), ConfigError);
    }
}

TEST_CASE("column_norm_reparam")
{
    SUBCASE("3-4-5 column")
    {
        const auto s = column_norm_reparam(Tensor::matrix({{3}, {4}}));
        CHECK(s.alpha[0] == 5.0);
        CHECK(s.w_unit(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(s.w_unit(1, 0) == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("identity")
    {
        const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
        const auto s = column_norm_reparam(eye);
        for (double a : s.alpha.values()) CHECK(a == 1.0);
        CHECK(s.w_unit == eye);
    }
    SUBCASE("random matrices recompose")
    {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            oracle::SplitMix rng(seed);
            const Tensor w = random_matrix(7, 4, rng);
            const auto s = column_norm_reparam(w);
            double err = 0.0;
            for (std::size_t r = 0; r < 7; ++r)
                for (std::size_t h = 0; h < 4; ++h)
                    err = std::max(err, std::abs(s.w_unit(r, h) * s.alpha[h] - w(r, h)));
            CHECK(err < 1e-12);
            for (std::size_t h = 0; h < 4; ++h) {
                double n2 = 0.0;
                for (std::size_t r = 0; r < 7; ++r) n2 += s.w_unit(r, h) * s.w_unit(r, h);
                CHECK(n2 == doctest::Approx(1.0).epsilon(1e-14));
            }
        }
    }
    SUBCASE("degenerate column")
    {
        CHECK_THROWS_AS(column_norm_reparam(Tensor::matrix({{1, 1e-13}, {0, 0}})), DegenerateError);
    }
}

TEST_CASE("params round-trip and architecture inference")
{
    for (ModelKind kind : {ModelKind::linear, ModelKind::vae1, ModelKind::vae3}) {
        for (bool shared : {true, false}) {
            if (kind == ModelKind::linear && !shared) continue;
            data::RngStream init(1, 2);
            const Architecture a = arch_of(kind, 3, 5, shared);
            VaeModel m(a, init);
            const Architecture inferred = VaeModel::infer_architecture(m.params());
            CHECK(inferred.kind == a.kind);
            CHECK(inferred.latent_dim == 3);
            CHECK(inferred.data_dim == 5);
            CHECK(inferred.encoder_hidden == a.encoder_hidden);
            CHECK(inferred.decoder_hidden == a.decoder_hidden);
            if (kind != ModelKind::linear) CHECK(inferred.shared_encoder_trunk == shared);
            VaeModel copy(inferred);
            copy.set_params(m.params());
            CHECK(copy.params() == m.params());
            auto bad = m.params();
            bad.erase(bad.begin()->first);
            CHECK_THROWS_AS(copy.set_params(bad), ShapeError);
        }
    }
}
