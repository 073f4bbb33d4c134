#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cvae/rng.hpp"
#include "cvae/tensor.hpp"

namespace cvae {

/// A batch of images in [0,1] with binary attribute vectors.
struct LabeledBatch {
    Tensor images;  // [N,C,H,W]
    Tensor attrs;   // [N,A], entries in {0,1}

    int size() const { return images.ndim() == 4 ? images.dim(0) : 0; }
    void validate() const;
};

enum class DataSource { folder, synthetic };

struct AugmentFlags {
    bool hflip = false;
    double rotate_deg = 0.0;
};

struct DatasetSpec {
    DataSource source = DataSource::synthetic;
    int channels = 3;
    int height = 32;
    int width = 32;
    std::vector<std::string> attr_names;
    double train_fraction = 0.8;
    uint64_t split_seed = 0;
    AugmentFlags augment;
    // synthetic source
    int synthetic_n = 0;
    uint64_t synthetic_seed = 0;
    // folder source
    std::string root;
    std::string attr_table;

    void validate() const;
};

/// Attribute names realized by the synthetic generator, in order.
const std::vector<std::string>& synthetic_attr_names();

/// Immutable dataset handle; cheap to copy. Folder-backed datasets read and
/// resize images lazily per batch; synthetic ones are materialized in memory.
class Dataset {
public:
    int size() const { return static_cast<int>(indices_.size()); }
    int attr_dim() const;
    int channels() const;
    int height() const;
    int width() const;
    const std::vector<std::string>& attr_names() const;

    /// Assembles the batch for the given positions (0-based within this view).
    LabeledBatch batch(const std::vector<int>& positions) const;
    LabeledBatch batch_range(int begin, int end) const;

    /// All attribute rows of this view, [N,A].
    Tensor all_attrs() const;

    static Dataset load_folder(const std::string& root,
                               const std::string& attr_table_path,
                               const DatasetSpec& spec);
    static Dataset make_synthetic(int n, const DatasetSpec& spec);

    friend std::pair<Dataset, Dataset> split(const Dataset& d,
                                             double train_fraction, uint64_t seed);

private:
    struct Storage;
    std::shared_ptr<const Storage> storage_;
    std::vector<int> indices_;  // view into storage rows
};

/// Deterministic disjoint/exhaustive split of a dataset view.
std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction,
                                  uint64_t seed);

/// Random horizontal flips (p = 1/2) and uniform rotations in
/// [-rotate_deg, +rotate_deg] with reflection padding. Attributes unchanged.
LabeledBatch augment(const LabeledBatch& batch, const AugmentFlags& flags, Rng& rng);

/// Deterministic single-image transforms behind augment ([C,H,W] in, same out).
Tensor hflip_image(const Tensor& image);
Tensor rotate_image(const Tensor& image, double degrees);

// Pixel rules for the synthetic shapes; used to verify that the conditioning
// signal is recoverable, and as the attribute-fidelity probe on samples.
struct SyntheticProbe {
    /// Mean red channel over the estimated foreground of one [C,H,W] image.
    static double foreground_red_mean(const Tensor& image);
    /// Hard attribute predictions {is_circle, is_large, is_red, is_top_half,
    /// has_border} from pixels alone.
    static std::array<int, 5> predict(const Tensor& image);
};

}  // namespace cvae
