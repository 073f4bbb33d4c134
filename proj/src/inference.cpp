#include "cvae/inference.hpp"

#include <algorithm>
#include <sstream>

#include "cvae/image_io.hpp"
#include "cvae/rng.hpp"

namespace cvae {

Tensor reconstruct(CvaeModel& model, const Tensor& x, const Tensor& y) {
    auto [mu, ls] = model.encode_values(x, y);
    return model.decode_values(mu, y);
}

Tensor sample_conditional_with_noise(CvaeModel& model, const Tensor& attrs,
                                     const Tensor& noise, bool through_flow) {
    const ModelConfig& cfg = model.config();
    if (attrs.ndim() != 2 || attrs.dim(1) != cfg.attr_dim)
        throw std::invalid_argument("sample_conditional: attribute vectors must be [N," +
                                    std::to_string(cfg.attr_dim) + "]");
    if (noise.ndim() != 2 || noise.dim(0) != attrs.dim(0) ||
        noise.dim(1) != cfg.latent_dim)
        throw std::invalid_argument("sample_conditional: noise must be [N,latent_dim]");

    Tensor z = noise;
    if (cfg.setting == Setting::sigma_nf) {
        auto [mu_p, ls_p] = model.encode_label_values(attrs);
        for (int64_t i = 0; i < z.size(); ++i)
            z[i] = mu_p[i] + noise[i] * std::exp(ls_p[i]);
        if (through_flow) z = model.flow().inverse(z);
    }
    return model.decode_values(z, attrs);
}

Tensor sample_conditional(CvaeModel& model, const Tensor& attrs, uint64_t seed,
                          bool through_flow) {
    Rng rng(seed);
    Tensor noise = rng.normal_tensor({attrs.dim(0), model.config().latent_dim});
    return sample_conditional_with_noise(model, attrs, noise, through_flow);
}

void sample_grid(CvaeModel& model, const std::vector<Tensor>& attr_rows, int cols,
                 uint64_t seed, const std::string& out_path, bool through_flow) {
    if (attr_rows.empty()) throw std::invalid_argument("sample_grid: no attribute rows");
    if (cols < 1) throw std::invalid_argument("sample_grid: cols must be >= 1");
    const ModelConfig& cfg = model.config();
    int rows = static_cast<int>(attr_rows.size());
    Tensor attrs({rows * cols, cfg.attr_dim});
    for (int r = 0; r < rows; ++r) {
        const Tensor& row = attr_rows[static_cast<size_t>(r)];
        if (row.size() != cfg.attr_dim)
            throw std::invalid_argument("sample_grid: attribute row length mismatch");
        for (int c = 0; c < cols; ++c)
            for (int j = 0; j < cfg.attr_dim; ++j)
                attrs[(static_cast<int64_t>(r) * cols + c) * cfg.attr_dim + j] = row[j];
    }
    Tensor samples = sample_conditional(model, attrs, seed, through_flow);

    int ch = cfg.channels, h = cfg.height, w = cfg.width;
    Tensor grid({ch, rows * h, cols * w});
    int64_t plane_in = static_cast<int64_t>(h) * w;
    int64_t plane_out = static_cast<int64_t>(rows) * h * cols * w;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double* src = samples.data() +
                                (static_cast<int64_t>(r) * cols + c) * ch * plane_in;
            for (int k = 0; k < ch; ++k)
                for (int i = 0; i < h; ++i)
                    std::copy_n(src + k * plane_in + static_cast<int64_t>(i) * w, w,
                                grid.data() + k * plane_out +
                                    (static_cast<int64_t>(r) * h + i) * (cols * w) +
                                    static_cast<int64_t>(c) * w);
        }
    write_png(out_path, grid);
}

Tensor parse_attrs(const std::string& text, const std::vector<std::string>& names) {
    int a = static_cast<int>(names.size());
    std::vector<std::vector<double>> rows;
    std::istringstream row_stream(text);
    std::string row_text;
    while (std::getline(row_stream, row_text, ';')) {
        std::vector<std::string> tokens;
        std::istringstream tok_stream(row_text);
        std::string tok;
        while (std::getline(tok_stream, tok, ',')) {
            size_t b = tok.find_first_not_of(" \t");
            size_t e = tok.find_last_not_of(" \t");
            if (b == std::string::npos) continue;
            tokens.push_back(tok.substr(b, e - b + 1));
        }
        std::vector<double> row(static_cast<size_t>(a), 0.0);
        bool numeric = !tokens.empty() &&
                       std::all_of(tokens.begin(), tokens.end(), [](const std::string& s) {
                           return s == "0" || s == "1";
                       });
        if (numeric) {
            if (static_cast<int>(tokens.size()) != a)
                throw std::invalid_argument("attribute row '" + row_text + "' has " +
                                            std::to_string(tokens.size()) +
                                            " values, expected " + std::to_string(a));
            for (int j = 0; j < a; ++j) row[static_cast<size_t>(j)] = tokens[static_cast<size_t>(j)] == "1";
        } else {
            for (const std::string& name : tokens) {
                auto it = std::find(names.begin(), names.end(), name);
                if (it == names.end())
                    throw std::invalid_argument("unknown attribute '" + name + "'");
                row[static_cast<size_t>(it - names.begin())] = 1.0;
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument("no attribute rows in '" + text + "'");
    Tensor out({static_cast<int>(rows.size()), a});
    for (size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < a; ++j)
            out[static_cast<int64_t>(i) * a + j] = rows[i][static_cast<size_t>(j)];
    return out;
}

}  // namespace cvae
