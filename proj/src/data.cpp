#include "cvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cvae/image_io.hpp"

namespace cvae {

namespace fs = std::filesystem;

void LabeledBatch::validate() const {
    if (images.ndim() != 4 || attrs.ndim() != 2)
        throw std::invalid_argument("LabeledBatch: expects images [N,C,H,W], attrs [N,A]");
    if (images.dim(0) < 1) throw std::invalid_argument("LabeledBatch: empty batch");
    if (attrs.dim(0) != images.dim(0))
        throw std::invalid_argument("LabeledBatch: images/attrs count mismatch");
    for (int64_t i = 0; i < attrs.size(); ++i)
        if (attrs[i] != 0.0 && attrs[i] != 1.0)
            throw std::invalid_argument("LabeledBatch: attributes must be binary");
    for (int64_t i = 0; i < images.size(); ++i)
        if (!(images[i] >= 0.0 && images[i] <= 1.0))
            throw std::invalid_argument("LabeledBatch: pixel values must lie in [0,1]");
}

void DatasetSpec::validate() const {
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("dataset spec: channels must be 1 or 3");
    if (height < 8 || width < 8)
        throw std::invalid_argument("dataset spec: image size too small");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("dataset spec: train_fraction must be in (0,1)");
    if (augment.rotate_deg < 0)
        throw std::invalid_argument("dataset spec: rotate_deg must be >= 0");
    if (source == DataSource::synthetic && synthetic_n < 1)
        throw std::invalid_argument("dataset spec: synthetic_n must be >= 1");
}

const std::vector<std::string>& synthetic_attr_names() {
    static const std::vector<std::string> names = {"is_circle", "is_large", "is_red",
                                                   "is_top_half", "has_border"};
    return names;
}

struct Dataset::Storage {
    bool in_memory = true;
    int c = 3, h = 0, w = 0;
    std::vector<std::string> attr_names;
    Tensor attrs;                      // [M,A]
    std::vector<Tensor> images;        // in-memory rows, each [C,H,W]
    std::vector<std::string> files;    // folder rows, absolute paths
};

int Dataset::attr_dim() const { return storage_->attrs.ndim() == 2 ? storage_->attrs.dim(1) : 0; }
int Dataset::channels() const { return storage_->c; }
int Dataset::height() const { return storage_->h; }
int Dataset::width() const { return storage_->w; }
const std::vector<std::string>& Dataset::attr_names() const { return storage_->attr_names; }

LabeledBatch Dataset::batch(const std::vector<int>& positions) const {
    if (positions.empty()) throw std::invalid_argument("Dataset::batch: empty selection");
    const Storage& s = *storage_;
    int n = static_cast<int>(positions.size());
    int a = attr_dim();
    LabeledBatch out;
    out.images = Tensor({n, s.c, s.h, s.w});
    out.attrs = Tensor({n, a});
    int64_t img_sz = static_cast<int64_t>(s.c) * s.h * s.w;
    for (int i = 0; i < n; ++i) {
        int pos = positions[static_cast<size_t>(i)];
        if (pos < 0 || pos >= size())
            throw std::out_of_range("Dataset::batch: position out of range");
        int row = indices_[static_cast<size_t>(pos)];
        Tensor img;
        if (s.in_memory) {
            img = s.images[static_cast<size_t>(row)];
        } else {
            img = read_image(s.files[static_cast<size_t>(row)], s.c);
            img = resize_bilinear(img, s.h, s.w);
        }
        std::copy_n(img.data(), img_sz, out.images.data() + i * img_sz);
        for (int j = 0; j < a; ++j)
            out.attrs[static_cast<int64_t>(i) * a + j] =
                s.attrs[static_cast<int64_t>(row) * a + j];
    }
    return out;
}

LabeledBatch Dataset::batch_range(int begin, int end) const {
    std::vector<int> positions(static_cast<size_t>(end - begin));
    std::iota(positions.begin(), positions.end(), begin);
    return batch(positions);
}

Tensor Dataset::all_attrs() const {
    const Storage& s = *storage_;
    int n = size(), a = attr_dim();
    Tensor out({n, a});
    for (int i = 0; i < n; ++i) {
        int row = indices_[static_cast<size_t>(i)];
        for (int j = 0; j < a; ++j)
            out[static_cast<int64_t>(i) * a + j] = s.attrs[static_cast<int64_t>(row) * a + j];
    }
    return out;
}

Dataset Dataset::load_folder(const std::string& root,
                             const std::string& attr_table_path,
                             const DatasetSpec& spec) {
    spec.validate();
    std::ifstream in(attr_table_path);
    if (!in) throw std::runtime_error("cannot open attribute table '" + attr_table_path + "'");

    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("attribute table '" + attr_table_path + "' is empty");
    long declared = 0;
    try {
        declared = std::stol(line);
    } catch (...) {
        throw std::runtime_error("attribute table: first line must be the image count");
    }
    if (!std::getline(in, line))
        throw std::runtime_error("attribute table: missing attribute-name line");
    std::vector<std::string> names;
    {
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) names.push_back(tok);
    }
    if (names.empty()) throw std::runtime_error("attribute table: no attribute names");
    int a = static_cast<int>(names.size());

    std::vector<std::pair<std::string, std::vector<double>>> rows;
    int line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        std::string fname;
        ss >> fname;
        std::vector<double> vals;
        std::string tok;
        while (ss >> tok) {
            if (tok == "1" || tok == "+1") vals.push_back(1.0);
            else if (tok == "-1") vals.push_back(0.0);  // -1 maps to 0
            else
                throw std::runtime_error("attribute table line " + std::to_string(line_no) +
                                         ": value '" + tok + "' is not +-1");
        }
        if (static_cast<int>(vals.size()) != a)
            throw std::runtime_error("attribute table line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(a) + " values, got " +
                                     std::to_string(vals.size()));
        rows.emplace_back(fname, std::move(vals));
    }
    if (declared != static_cast<long>(rows.size()))
        throw std::runtime_error("attribute table declares " + std::to_string(declared) +
                                 " rows but contains " + std::to_string(rows.size()));

    std::sort(rows.begin(), rows.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });

    auto storage = std::make_shared<Storage>();
    storage->in_memory = false;
    storage->c = spec.channels;
    storage->h = spec.height;
    storage->w = spec.width;
    storage->attr_names = names;
    storage->attrs = Tensor({static_cast<int>(rows.size()), a});
    for (size_t i = 0; i < rows.size(); ++i) {
        fs::path p = fs::path(root) / rows[i].first;
        if (!fs::exists(p))
            throw std::runtime_error("attribute table references missing file '" +
                                     p.string() + "'");
        storage->files.push_back(p.string());
        for (int j = 0; j < a; ++j)
            storage->attrs[static_cast<int64_t>(i) * a + j] = rows[i].second[static_cast<size_t>(j)];
    }

    Dataset d;
    d.storage_ = std::move(storage);
    d.indices_.resize(rows.size());
    std::iota(d.indices_.begin(), d.indices_.end(), 0);
    return d;
}

namespace {

struct ShapeParams {
    bool is_circle, is_large, is_red, is_top_half, has_border;
    double cx, cy, radius, fg[3];
    double bg_a[3], bg_b[3];  // gradient endpoint colors
    double grad_cos, grad_sin;
};

// Shapes are rendered with soft 1px edges over a linear-gradient background
// with per-pixel noise; the noise gives the data an irreducible variance
// floor and the gradient adds nuisance structure, as photographs have.
void render_shape(const ShapeParams& sp, int h, int w, double noise_sigma,
                  Rng& rng, double* img) {
    int64_t plane = static_cast<int64_t>(h) * w;
    const double white = 0.95;
    double span = std::max(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double dy = i + 0.5 - sp.cy, dx = j + 0.5 - sp.cx;
            double d = sp.is_circle ? std::sqrt(dx * dx + dy * dy) - sp.radius
                                    : std::max(std::abs(dx), std::abs(dy)) - sp.radius;
            double cov = std::clamp(0.5 - d, 0.0, 1.0);
            double border = sp.has_border ? std::clamp(1.15 - std::abs(d), 0.0, 1.0) : 0.0;
            double t = std::clamp(((i - h / 2.0) * sp.grad_sin + (j - w / 2.0) * sp.grad_cos) /
                                          span + 0.5, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                double bg = sp.bg_a[c] + t * (sp.bg_b[c] - sp.bg_a[c]);
                double v = bg + cov * (sp.fg[c] - bg);
                v += border * (white - v);
                v += noise_sigma * rng.normal();
                img[c * plane + static_cast<int64_t>(i) * w + j] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
}

}  // namespace

Dataset Dataset::make_synthetic(int n, const DatasetSpec& spec) {
    if (n < 1) throw std::invalid_argument("make_synthetic: n must be >= 1");
    if (spec.channels != 3)
        throw std::invalid_argument("make_synthetic: synthetic shapes are RGB (channels=3)");
    int h = spec.height, w = spec.width;
    double s = std::min(h, w);

    auto storage = std::make_shared<Storage>();
    storage->in_memory = true;
    storage->c = 3;
    storage->h = h;
    storage->w = w;
    storage->attr_names = synthetic_attr_names();
    int a = static_cast<int>(storage->attr_names.size());
    storage->attrs = Tensor({n, a});
    storage->images.reserve(static_cast<size_t>(n));

    Rng rng(spec.synthetic_seed);
    const double noise_sigma = 0.08;
    for (int i = 0; i < n; ++i) {
        ShapeParams sp;
        sp.is_circle = rng.uniform() < 0.5;
        sp.is_large = rng.uniform() < 0.5;
        sp.is_red = rng.uniform() < 0.5;
        sp.is_top_half = rng.uniform() < 0.5;
        sp.has_border = rng.uniform() < 0.5;

        // muted gradient endpoints, well separated from the shape colors
        for (int c = 0; c < 3; ++c) {
            sp.bg_a[c] = rng.uniform(0.06, 0.32);
            sp.bg_b[c] = rng.uniform(0.06, 0.32);
        }
        double angle = rng.uniform(0.0, 2.0 * M_PI);
        sp.grad_cos = std::cos(angle);
        sp.grad_sin = std::sin(angle);
        double hi = 0.85 + rng.uniform(-0.10, 0.10);
        double lo1 = 0.12 + rng.uniform(-0.07, 0.07);
        double lo2 = 0.12 + rng.uniform(-0.07, 0.07);
        sp.fg[0] = sp.is_red ? hi : lo1;
        sp.fg[1] = std::min(lo1, lo2);
        sp.fg[2] = sp.is_red ? lo2 : hi;

        sp.radius = s * (sp.is_large ? 0.28 : 0.175) * (1.0 + rng.uniform(-0.06, 0.06));
        // keep the whole shape (plus border ring and soft edge) in frame,
        // and keep the vertical bands on their own side of the midline
        double margin = sp.radius + 2.5;
        sp.cx = std::clamp(w * (0.5 + rng.uniform(-0.15, 0.15)), margin, w - margin);
        double band = sp.is_top_half ? 0.27 : 0.73;
        double cy_raw = h * (band + rng.uniform(-0.07, 0.07));
        sp.cy = sp.is_top_half ? std::clamp(cy_raw, margin, h / 2.0 - 1.5)
                               : std::clamp(cy_raw, h / 2.0 + 1.5, h - margin);

        Tensor img({3, h, w});
        render_shape(sp, h, w, noise_sigma, rng, img.data());
        storage->images.push_back(std::move(img));

        double attr_vals[5] = {static_cast<double>(sp.is_circle),
                               static_cast<double>(sp.is_large),
                               static_cast<double>(sp.is_red),
                               static_cast<double>(sp.is_top_half),
                               static_cast<double>(sp.has_border)};
        for (int j = 0; j < a; ++j)
            storage->attrs[static_cast<int64_t>(i) * a + j] = attr_vals[j];
    }

    Dataset d;
    d.storage_ = std::move(storage);
    d.indices_.resize(static_cast<size_t>(n));
    std::iota(d.indices_.begin(), d.indices_.end(), 0);
    return d;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction,
                                  uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0,1)");
    int n = d.size();
    std::vector<int> order(d.indices_);
    Rng rng(seed);
    rng.shuffle(order);
    int n_train = static_cast<int>(std::llround(n * train_fraction));
    n_train = std::clamp(n_train, 1, n - 1);
    Dataset train, test;
    train.storage_ = d.storage_;
    test.storage_ = d.storage_;
    train.indices_.assign(order.begin(), order.begin() + n_train);
    test.indices_.assign(order.begin() + n_train, order.end());
    std::sort(train.indices_.begin(), train.indices_.end());
    std::sort(test.indices_.begin(), test.indices_.end());
    return {train, test};
}

namespace {

int reflect_index(int x, int n) {
    // symmetric reflection: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    if (n == 1) return 0;
    int period = 2 * n;
    x = ((x % period) + period) % period;
    return x < n ? x : period - 1 - x;
}

void hflip_into(const double* src, int c, int h, int w, double* dst) {
    int64_t plane = static_cast<int64_t>(h) * w;
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                dst[ch * plane + static_cast<int64_t>(i) * w + j] =
                    src[ch * plane + static_cast<int64_t>(i) * w + (w - 1 - j)];
}

void rotate_into(const double* src, int c, int h, int w, double deg, double* dst) {
    double rad = deg * M_PI / 180.0;
    double cs = std::cos(rad), sn = std::sin(rad);
    double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    int64_t plane = static_cast<int64_t>(h) * w;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            // inverse rotation of the destination coordinate
            double dy = i - cy, dx = j - cx;
            double sy = cy + cs * dy + sn * dx;
            double sx = cx - sn * dy + cs * dx;
            int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
            double wy = sy - y0, wx = sx - x0;
            int ya = reflect_index(y0, h), yb = reflect_index(y0 + 1, h);
            int xa = reflect_index(x0, w), xb = reflect_index(x0 + 1, w);
            for (int ch = 0; ch < c; ++ch) {
                const double* p = src + ch * plane;
                double top = p[static_cast<int64_t>(ya) * w + xa] * (1 - wx) +
                             p[static_cast<int64_t>(ya) * w + xb] * wx;
                double bot = p[static_cast<int64_t>(yb) * w + xa] * (1 - wx) +
                             p[static_cast<int64_t>(yb) * w + xb] * wx;
                dst[ch * plane + static_cast<int64_t>(i) * w + j] =
                    top * (1 - wy) + bot * wy;
            }
        }
    }
}

}  // namespace

Tensor hflip_image(const Tensor& image) {
    if (image.ndim() != 3) throw std::invalid_argument("hflip_image: expects [C,H,W]");
    Tensor out(image.shape());
    hflip_into(image.data(), image.dim(0), image.dim(1), image.dim(2), out.data());
    return out;
}

Tensor rotate_image(const Tensor& image, double degrees) {
    if (image.ndim() != 3) throw std::invalid_argument("rotate_image: expects [C,H,W]");
    Tensor out(image.shape());
    rotate_into(image.data(), image.dim(0), image.dim(1), image.dim(2), degrees,
                out.data());
    return out;
}

LabeledBatch augment(const LabeledBatch& batch, const AugmentFlags& flags, Rng& rng) {
    batch.validate();
    if (!flags.hflip && flags.rotate_deg == 0.0) return batch;
    int n = batch.images.dim(0), c = batch.images.dim(1);
    int h = batch.images.dim(2), w = batch.images.dim(3);
    int64_t img_sz = static_cast<int64_t>(c) * h * w;
    LabeledBatch out;
    out.images = Tensor(batch.images.shape());
    out.attrs = batch.attrs;
    std::vector<double> tmp(static_cast<size_t>(img_sz));
    for (int i = 0; i < n; ++i) {
        const double* src = batch.images.data() + i * img_sz;
        double* dst = out.images.data() + i * img_sz;
        bool flip = flags.hflip && rng.uniform() < 0.5;
        double angle = flags.rotate_deg > 0
                           ? rng.uniform(-flags.rotate_deg, flags.rotate_deg)
                           : 0.0;
        if (flip && angle != 0.0) {
            hflip_into(src, c, h, w, tmp.data());
            rotate_into(tmp.data(), c, h, w, angle, dst);
        } else if (flip) {
            hflip_into(src, c, h, w, dst);
        } else if (angle != 0.0) {
            rotate_into(src, c, h, w, angle, dst);
        } else {
            std::copy_n(src, img_sz, dst);
        }
    }
    return out;
}

// ------------------------------------------------------------ SyntheticProbe

namespace {

struct FgStats {
    std::vector<int64_t> pixels;  // flat indices within a plane
};

FgStats foreground_of(const Tensor& image) {
    int h = image.dim(1), w = image.dim(2);
    int64_t plane = static_cast<int64_t>(h) * w;
    FgStats st;
    // Background model: bilinear interpolation of the four 3x3 corner-patch
    // means. Exact for a linear gradient, and the jittered shape placement
    // never reaches the corners.
    double corner[4][3];  // tl, tr, bl, br
    for (int c = 0; c < 3; ++c) {
        const double* p = image.data() + c * plane;
        auto patch = [&](int i0, int j0) {
            double s = 0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    s += p[static_cast<int64_t>(i0 + i) * w + (j0 + j)];
            return s / 9.0;
        };
        corner[0][c] = patch(0, 0);
        corner[1][c] = patch(0, w - 3);
        corner[2][c] = patch(h - 3, 0);
        corner[3][c] = patch(h - 3, w - 3);
    }
    auto bg_at = [&](int i, int j, int c) {
        double ty = static_cast<double>(i) / (h - 1);
        double tx = static_cast<double>(j) / (w - 1);
        double top = corner[0][c] + tx * (corner[1][c] - corner[0][c]);
        double bot = corner[2][c] + tx * (corner[3][c] - corner[2][c]);
        return top + ty * (bot - top);
    };
    std::vector<char> hot(static_cast<size_t>(plane), 0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            int64_t k = static_cast<int64_t>(i) * w + j;
            double dev = 0;
            for (int c = 0; c < 3; ++c)
                dev = std::max(dev, std::abs(image[c * plane + k] - bg_at(i, j, c)));
            hot[static_cast<size_t>(k)] = dev > 0.3;
        }
    // erode isolated noise hits: keep pixels with at least 2 hot 4-neighbors
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            int64_t k = static_cast<int64_t>(i) * w + j;
            if (!hot[static_cast<size_t>(k)]) continue;
            int n = 0;
            if (i > 0) n += hot[static_cast<size_t>(k - w)];
            if (i + 1 < h) n += hot[static_cast<size_t>(k + w)];
            if (j > 0) n += hot[static_cast<size_t>(k - 1)];
            if (j + 1 < w) n += hot[static_cast<size_t>(k + 1)];
            if (n >= 2) st.pixels.push_back(k);
        }
    if (st.pixels.empty())
        for (int64_t i = 0; i < plane; ++i) st.pixels.push_back(i);
    return st;
}

}  // namespace

double SyntheticProbe::foreground_red_mean(const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("SyntheticProbe: expects RGB [3,H,W]");
    FgStats st = foreground_of(image);
    double s = 0;
    for (int64_t i : st.pixels) s += image[i];  // channel 0 = red plane
    return s / static_cast<double>(st.pixels.size());
}

std::array<int, 5> SyntheticProbe::predict(const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("SyntheticProbe: expects RGB [3,H,W]");
    int h = image.dim(1), w = image.dim(2);
    int64_t plane = static_cast<int64_t>(h) * w;
    FgStats st = foreground_of(image);

    double red = 0, blue = 0, centroid_y = 0, centroid_x = 0;
    int whiteish = 0;
    for (int64_t i : st.pixels) {
        double r = image[i], g = image[plane + i], b = image[2 * plane + i];
        red += r;
        blue += b;
        double mn = std::min({r, g, b});
        if (mn > 0.5) ++whiteish;
        centroid_y += static_cast<double>(i / w);
        centroid_x += static_cast<double>(i % w);
    }
    double count = static_cast<double>(st.pixels.size());
    double area_frac = count / static_cast<double>(plane);
    double cy = centroid_y / count, cx = centroid_x / count;

    // Template match: fit a disc and a square at the centroid, sweeping the
    // size a few percent around the equal-area estimate, and count mask
    // disagreements. Uses the whole mask, so pixel noise and soft edges
    // cannot flip the verdict.
    std::vector<char> mask(static_cast<size_t>(plane), 0);
    for (int64_t i : st.pixels) mask[static_cast<size_t>(i)] = 1;
    auto template_err = [&](bool disc, double size, double oy, double ox) {
        int64_t err = 0;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double dy = i - cy - oy, dx = j - cx - ox;
                double dist = disc ? std::sqrt(dy * dy + dx * dx)
                                   : std::max(std::abs(dy), std::abs(dx));
                err += (dist <= size) != static_cast<bool>(mask[static_cast<size_t>(i) * w + j]);
            }
        return err;
    };
    int64_t err_circle = std::numeric_limits<int64_t>::max();
    int64_t err_square = err_circle;
    for (double scale : {0.90, 0.95, 1.0, 1.05, 1.10})
        for (double oy : {-0.5, 0.0, 0.5})
            for (double ox : {-0.5, 0.0, 0.5}) {
                err_circle = std::min(
                    err_circle, template_err(true, scale * std::sqrt(count / M_PI), oy, ox));
                err_square = std::min(
                    err_square, template_err(false, scale * 0.5 * std::sqrt(count), oy, ox));
            }

    std::array<int, 5> out{};
    out[0] = err_circle <= err_square ? 1 : 0;      // is_circle
    out[1] = area_frac > 0.1957 ? 1 : 0;             // is_large
    out[2] = red > blue ? 1 : 0;                    // is_red
    out[3] = cy < h / 2.0 ? 1 : 0;                  // is_top_half
    out[4] = whiteish / count > 0.025 ? 1 : 0;      // has_border
    return out;
}

}  // namespace cvae
