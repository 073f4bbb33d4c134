#include <doctest.h>

#include <cmath>

#include "cvae/losses.hpp"
#include "cvae/models.hpp"
#include "cvae/rng.hpp"

using namespace cvae;

namespace {

ModelConfig tiny_config(Setting s, int h = 8, int w = 8, int c = 1) {
    ModelConfig cfg;
    cfg.setting = s;
    cfg.latent_dim = 2;
    cfg.attr_dim = 2;
    cfg.channels = c;
    cfg.height = h;
    cfg.width = w;
    cfg.enc_widths = {3, 4};
    cfg.p_widths = {3, 4};
    cfg.flow_depth = 2;
    cfg.flow_hidden = 6;
    return cfg;
}

LabeledBatch random_batch(const ModelConfig& cfg, int n, Rng& rng) {
    LabeledBatch b;
    b.images = Tensor({n, cfg.channels, cfg.height, cfg.width});
    b.attrs = Tensor({n, cfg.attr_dim});
    for (int64_t i = 0; i < b.images.size(); ++i) b.images[i] = rng.uniform();
    for (int64_t i = 0; i < b.attrs.size(); ++i) b.attrs[i] = rng.uniform() < 0.5;
    return b;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("zero input with zero-initialized head gives zero mean") {
    ModelConfig cfg = tiny_config(Setting::gaussian);
    CvaeModel m(cfg);
    Rng rng(51);
    m.init_params(rng);
    Tensor x({1, 1, 8, 8}), y({1, 2});
    auto [mu, ls] = m.encode_values(x, y);
    for (int i = 0; i < cfg.latent_dim; ++i) {
        CHECK(mu[i] == 0.0);
        CHECK(ls[i] == 0.0);
    }
    CHECK(mu.shape() == std::vector<int>{1, 2});
}

TEST_CASE("encode/encode_label/decode are deterministic and shaped") {
    for (Setting s : {Setting::gaussian, Setting::sigma_nonnf, Setting::sigma_nf}) {
        ModelConfig cfg = tiny_config(s);
        CvaeModel m(cfg);
        Rng rng(52);
        m.init_params(rng);
        Rng drng(53);
        LabeledBatch b = random_batch(cfg, 3, drng);

        auto [mu1, ls1] = m.encode_values(b.images, b.attrs);
        auto [mu2, ls2] = m.encode_values(b.images, b.attrs);
        CHECK(mu1.shape() == std::vector<int>{3, cfg.latent_dim});
        for (int64_t i = 0; i < mu1.size(); ++i) {
            CHECK(mu1[i] == mu2[i]);  // bitwise
            CHECK(ls1[i] == ls2[i]);
        }
        Tensor xh1 = m.decode_values(mu1, b.attrs);
        Tensor xh2 = m.decode_values(mu1, b.attrs);
        CHECK(xh1.shape() == b.images.shape());
        for (int64_t i = 0; i < xh1.size(); ++i) CHECK(xh1[i] == xh2[i]);

        if (s == Setting::sigma_nf) {
            auto [mp1, lp1] = m.encode_label_values(b.attrs);
            auto [mp2, lp2] = m.encode_label_values(b.attrs);
            CHECK(mp1.shape() == std::vector<int>{3, cfg.latent_dim});
            for (int64_t i = 0; i < mp1.size(); ++i) CHECK(mp1[i] == mp2[i]);
        } else {
            CHECK_THROWS_AS(m.encode_label_values(b.attrs), std::logic_error);
        }
    }
}

TEST_CASE("decoder output lies in [0,1] and inverts the spatial chain") {
    Rng rng(54);
    for (auto [c, h, w] : {std::tuple{1, 32, 32}, {3, 64, 64}, {3, 86, 86}}) {
        ModelConfig cfg = tiny_config(Setting::sigma_nf, h, w, c);
        cfg.enc_widths = {3, 4, 5, 6};  // four stride-2 stages
        CvaeModel m(cfg);
        m.init_params(rng);
        // push weights away from zero so outputs are nontrivial
        for (Param* p : m.params())
            for (int64_t i = 0; i < p->value.size(); ++i)
                p->value[i] += 0.1 * rng.normal();

        LabeledBatch b = random_batch(cfg, 2, rng);
        auto [mu, ls] = m.encode_values(b.images, b.attrs);
        Tensor noise({2, cfg.latent_dim});
        rng.fill_normal(noise);
        Tensor z({2, cfg.latent_dim});
        for (int64_t i = 0; i < z.size(); ++i)
            z[i] = mu[i] + std::exp(ls[i]) * noise[i];
        Tensor xh = m.decode_values(z, b.attrs);
        CHECK(xh.shape() == std::vector<int>{2, c, h, w});
        for (int64_t i = 0; i < xh.size(); ++i) {
            CHECK(xh[i] >= 0.0);
            CHECK(xh[i] <= 1.0);
        }
    }
}

TEST_CASE("decoder range holds over 100 random latent draws") {
    ModelConfig cfg = tiny_config(Setting::gaussian);
    CvaeModel m(cfg);
    Rng rng(55);
    m.init_params(rng);
    for (Param* p : m.params())
        for (int64_t i = 0; i < p->value.size(); ++i) p->value[i] += 0.3 * rng.normal();
    for (int trial = 0; trial < 100; ++trial) {
        Tensor z({1, cfg.latent_dim}), y({1, cfg.attr_dim});
        rng.fill_normal(z);
        y[0] = trial % 2;
        y[1] = (trial / 2) % 2;
        Tensor xh = m.decode_values(z, y);
        for (int64_t i = 0; i < xh.size(); ++i) {
            CHECK(xh[i] >= 0.0);
            CHECK(xh[i] <= 1.0);
        }
    }
}

TEST_CASE("shape mismatches are rejected") {
    ModelConfig cfg = tiny_config(Setting::sigma_nf);
    CvaeModel m(cfg);
    Rng rng(56);
    m.init_params(rng);
    Tensor bad_img({1, 1, 9, 8}), y({1, 2});
    CHECK_THROWS_AS(m.encode_values(bad_img, y), std::invalid_argument);
    Tensor img({1, 1, 8, 8}), bad_y({1, 3});
    CHECK_THROWS_AS(m.encode_values(img, bad_y), std::invalid_argument);
    Tensor bad_z({1, 5});
    CHECK_THROWS_AS(m.decode_values(bad_z, y), std::invalid_argument);
}

TEST_CASE("parameter_count: hand count on a one-stage config") {
    ModelConfig cfg = tiny_config(Setting::gaussian);
    cfg.enc_widths = {3};
    CvaeModel m(cfg);
    // encoder: conv (1+2)->3 k=4 + head; spatial 8 -> 4, flat = 3*16
    int64_t conv1 = 3 * 3 * 4 * 4 + 3;
    int64_t head = (2 * 2) * 48 + 2 * 2;
    // decoder: lift (2+2)->3*4*4, deconv 3->1 k=4
    int64_t lift = 48 * 4 + 48;
    int64_t deconv = 3 * 1 * 4 * 4 + 1;
    CHECK(m.parameter_count() == conv1 + head + lift + deconv);

    CvaeModel m2(cfg);
    CHECK(m.parameter_count() == m2.parameter_count());
}

TEST_CASE("parameter_count: latent-dimension delta follows the head formula") {
    ModelConfig cfg = tiny_config(Setting::gaussian);
    CvaeModel base(cfg);
    ModelConfig bigger = cfg;
    bigger.latent_dim = cfg.latent_dim + 1;
    CvaeModel grown(bigger);
    // flat encoder features: widths back = 4, spatial 8 -> 4 -> 2
    int64_t flat_q = 4 * 2 * 2;
    int64_t top = 4 * 2 * 2;
    // head gains 2 rows (mean + log-std) of flat_q weights + 2 biases;
    // the decoder lift gains one input column.
    int64_t expect_delta = 2 * flat_q + 2 + top;
    CHECK(grown.parameter_count() - base.parameter_count() == expect_delta);
}

TEST_CASE("gradients reach every parameter after one optimizer step") {
    for (Setting s : {Setting::gaussian, Setting::sigma_nonnf, Setting::sigma_nf}) {
        ModelConfig cfg = tiny_config(s);
        CvaeModel m(cfg);
        Rng rng(57);
        m.init_params(rng);
        LabeledBatch b = random_batch(cfg, 4, rng);

        auto one_pass = [&] {
            Tensor noise({4, cfg.latent_dim});
            rng.fill_normal(noise);
            Tape t;
            LossNodes nodes = total_loss(t, m, b, noise);
            zero_grads(m.params());
            t.backward(nodes.total);
        };
        one_pass();
        // crude gradient step to break the zero-initialized heads
        for (Param* p : m.params())
            for (int64_t i = 0; i < p->value.size(); ++i)
                p->value[i] -= 0.05 * p->grad[i];
        one_pass();
        for (Param* p : m.params()) {
            double mx = 0;
            for (int64_t i = 0; i < p->grad.size(); ++i)
                mx = std::max(mx, std::abs(p->grad[i]));
            INFO("setting ", setting_name(s), " param ", p->name);
            CHECK(mx > 0.0);
        }
    }
}

}  // TEST_SUITE
