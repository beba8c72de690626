#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "tabsynth/dataset.hpp"
#include "tabsynth/evaluation.hpp"

namespace tabsynth::report {

// ------------------------------------------------------------------ theme

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// Every figure draws from this single palette so rendered output is stable.
struct Theme {
    Rgb background{255, 255, 255};
    Rgb frame{40, 40, 40};
    Rgb text{20, 20, 20};
    Rgb inverse_text{245, 245, 245};
    Rgb muted{168, 168, 168}; // failed / missing cells
    Rgb ramp_low{236, 240, 248};
    Rgb ramp_high{10, 30, 84};
    std::vector<Rgb> series{{31, 90, 166},  {196, 92, 28},  {44, 130, 60},
                            {150, 40, 140}, {180, 150, 24}, {90, 90, 90}};
};

const Theme& theme();

// Clamps v to [0, 1] and interpolates the single-hue ramp; larger values map
// to strictly darker colors.
Rgb ramp_color(double v);

// ------------------------------------------------------------------ canvas

// Minimal RGB raster with a built-in 5x7 bitmap font. Drawing outside the
// canvas clips silently; reading outside throws DimensionMismatch.
class Image {
public:
    Image(int width, int height, Rgb fill);

    int width() const { return width_; }
    int height() const { return height_; }
    const std::vector<std::uint8_t>& pixels() const { return pixels_; }

    void set(int x, int y, Rgb c);
    Rgb get(int x, int y) const;

    void fill_rect(int x, int y, int w, int h, Rgb c);
    void frame_rect(int x, int y, int w, int h, Rgb c);
    void line(int x0, int y0, int x1, int y1, Rgb c);

    // Draws `s` with its top-left corner at (x, y). Letters render as
    // small caps; unknown characters advance blank.
    void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
    static int text_width(const std::string& s, int scale = 1);
    static int text_height(int scale = 1);

private:
    int width_ = 0, height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

// Writes a truecolor PNG (stored-deflate zlib stream), byte deterministic.
void write_png(const Image& image, const std::string& path);

// ------------------------------------------- figure data (tested directly)

// Utility metrics shown in the heatmap, all naturally in [0, 1].
const std::vector<std::string>& heatmap_metrics(); // 5 entries
// Column labels: for each metric, the synthetic-train protocol then the
// real-train protocol (10 entries).
const std::vector<std::string>& heatmap_columns();

// |generators| x 10 matrix of aggregate means in plan order; NaN marks a
// cell whose folds all failed. Throws UnknownClassifier.
Eigen::MatrixXd heatmap_values(const eval::EvaluationReport& report,
                               const std::string& classifier);

// Element-wise sum of the cell's confusion counts over non-failed folds.
// Throws MissingCell when the pair is absent or no fold produced counts.
metrics::ConfusionCounts summed_confusion(const eval::EvaluationReport& report,
                                          const std::string& generator,
                                          const std::string& classifier,
                                          const std::string& protocol);

struct FeatureMeanSummary {
    Eigen::VectorXd real_means;
    Eigen::VectorXd synth_means;
    Eigen::VectorXd abs_diff;
    int max_index = 0; // feature with the largest absolute mean difference
};

// Per-feature means of both datasets; throws SchemaMismatch when the feature
// schemas differ.
FeatureMeanSummary feature_mean_summary(const TabularDataset& real,
                                        const TabularDataset& synth);

// Series a loss panel plots: every trace series except the gradient-penalty
// diagnostic, which is not a loss curve.
std::vector<std::string> panel_series(const gen::TrainingTrace& trace);

// Pearson correlation matrix of the columns; constant columns score 0
// against everything (including themselves, by convention).
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& features);

// Lloyd k-means with seeded initialization; returns one label in [0, k) per
// row. Throws TooFewSamples when rows < k and ConfigInvalid when k < 2.
Eigen::VectorXi kmeans_labels(const Eigen::MatrixXd& features, int k,
                              std::uint64_t seed);

// Projection onto the top principal components (component signs fixed by
// making each one's largest-magnitude loading positive).
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& features, int components);

// -------------------------------------------------------------- renderers

// Generator rows x 10 metric/protocol columns, colored by the monotone ramp
// with one numeric annotation per cell.
Image render_metric_heatmap(const eval::EvaluationReport& report,
                            const std::string& classifier);

// Fold-summed 2x2 confusion matrix for one (generator, classifier) pair.
// `protocol` is "tr_ts", "ts_tr", or "both" for the side-by-side layout.
Image render_confusion(const eval::EvaluationReport& report,
                       const std::string& generator,
                       const std::string& classifier,
                       const std::string& protocol = "both");

// Two aligned per-feature mean strips (real, synthetic) plus an
// absolute-difference strip, annotated with the worst feature.
Image render_feature_mean_comparison(const TabularDataset& real,
                                     const TabularDataset& synth);

// One panel per (name, trace) pair, one polyline per plotted series, with a
// legend of series names. Traces without series are skipped; throws
// EmptyTrace when nothing remains.
Image render_loss_curves(
    const std::vector<std::pair<std::string, gen::TrainingTrace>>& traces);

// d x d correlation heatmap of the dataset's feature columns.
Image render_correlation_heatmap(const TabularDataset& dataset,
                                 const std::string& title = "");

// K-means clusters over a 2-D principal-component projection; the caption
// names the projection so the technique is visible in the figure itself.
Image render_cluster_plot(const TabularDataset& dataset, int n_clusters,
                          std::uint64_t seed, const std::string& title = "");

// ----------------------------------------------------------------- bundle

struct ManifestEntry {
    std::string filename;
    std::string kind;
    nlohmann::json source; // keys identifying what the figure was built from

    nlohmann::json to_json() const;
};

struct ReportBundle {
    std::string directory; // <out>/figures
    std::vector<ManifestEntry> entries;

    nlohmann::json manifest_json() const;
};

// Data the figure set is built from. `report` is required; `real` and the
// per-generator synthetic samples unlock the data-space figures.
struct FigureInputs {
    const eval::EvaluationReport* report = nullptr;
    const TabularDataset* real = nullptr;
    std::vector<std::pair<std::string, TabularDataset>> synthetic;
    int cluster_count = 2;
    std::uint64_t seed = 0;
};

// Renders every figure the inputs support into <out_dir>/figures with
// deterministic filenames, writes manifest.json, and returns the manifest.
// Confusion figures whose cells failed on every fold are skipped.
ReportBundle render_all(const FigureInputs& inputs, const std::string& out_dir);

} // namespace tabsynth::report
