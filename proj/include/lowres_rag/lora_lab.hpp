#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Desk-scale low-rank adaptation: W' = W + scale * A * B with W frozen and
// only A (d x r) and B (r x k) trained.
namespace lowres_rag::lora {

using RowVector = std::vector<double>;

/// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    /// Throws ShapeMismatch when data.size() != rows * cols.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
/// x * M for a row vector x.
RowVector row_times(const RowVector& x, const Matrix& m);
/// Sum of bit patterns; changes whenever any entry changes.
std::uint64_t checksum(const Matrix& m);

enum class AdapterTarget { query, value, generic };

std::string_view to_string(AdapterTarget t);
AdapterTarget adapter_target_from_string(std::string_view s);

struct LowRankAdapter {
    Matrix a;  // d x r
    Matrix b;  // r x k
    AdapterTarget target = AdapterTarget::generic;
    double scale = 1.0;

    std::size_t rank() const noexcept { return a.cols(); }
    std::size_t in_dim() const noexcept { return a.rows(); }
    std::size_t out_dim() const noexcept { return b.cols(); }
    /// Throws ShapeMismatch / InvalidRank on broken invariants.
    void validate() const;

    bool operator==(const LowRankAdapter&) const = default;
};

inline constexpr std::size_t kDefaultRank = 8;

/// scale * A * B.
Matrix delta_w(const LowRankAdapter& adapter);
/// W + delta_w(adapter); W is untouched.
Matrix apply_adapter(const Matrix& w, const LowRankAdapter& adapter);
/// x*W + scale*(x*A)*B without forming W'.
RowVector adapted_forward(const RowVector& x, const Matrix& w, const LowRankAdapter& adapter);

struct ParamCount {
    std::size_t lora_params = 0;
    std::size_t full_params = 0;
    double ratio = 0.0;
    /// Set when r >= min(d, k) / 2, where the low-rank saving mostly vanishes.
    bool rank_warning = false;
};

ParamCount trainable_param_count(std::size_t d, std::size_t k, std::size_t r);

/// A ~ N(0, 0.02^2) from a seeded generator, B = 0, so delta_w starts at zero.
LowRankAdapter init_adapter(std::size_t d, std::size_t k, std::size_t r, std::uint64_t seed,
                            AdapterTarget target = AdapterTarget::generic);

// --- training on a single projection ------------------------------------

struct Sample {
    RowVector x;  // length d
    RowVector y;  // length k
};

struct AdapterGrads {
    Matrix a;
    Matrix b;
};

/// Mean squared error over all samples and output components.
double mse_loss(const Matrix& w, const LowRankAdapter& adapter, const std::vector<Sample>& data);
AdapterGrads mse_gradients(const Matrix& w, const LowRankAdapter& adapter, const std::vector<Sample>& data);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
};

/// Compares analytic gradients against central differences with step h on
/// up to `max_coords` coordinates of A and B chosen by `seed` (all when 0).
/// Relative error is |g - n| / max(|g|, |n|, 1e-8).
GradCheckReport gradient_check(const Matrix& w, const LowRankAdapter& adapter, const std::vector<Sample>& data,
                               double h = 1e-5, std::size_t max_coords = 0, std::uint64_t seed = 0);

struct TrainOptions {
    std::size_t steps = 1000;
    double lr = 0.1;
    std::uint64_t seed = 0;
    std::size_t grad_check_coords = 32;
};

struct TrainResult {
    LowRankAdapter adapter;
    std::vector<double> loss_trace;  // loss before each update; size == steps
    double final_loss = 0.0;
    /// Spot check at the parameters after the first update.
    GradCheckReport grad_check;
};

/// Plain gradient descent on A and B only. Throws NonFiniteLoss on divergence.
TrainResult train_adapter(const Matrix& w, const std::vector<Sample>& data, LowRankAdapter init,
                          const TrainOptions& options);

// --- toy single-head attention -------------------------------------------

struct SequenceSample {
    Matrix x;  // T x d_model
    Matrix y;  // T x d_head
};

struct ToyAttentionLayer {
    Matrix w_q, w_k, w_v;  // d_model x d_head
    std::optional<LowRankAdapter> query_adapter;
    std::optional<LowRankAdapter> value_adapter;

    /// Attaches by adapter.target; generic adapters are rejected.
    void attach(LowRankAdapter adapter);
    /// softmax(Q K^T / sqrt(d_head)) V with adapted Q and V projections.
    Matrix forward(const Matrix& x) const;
};

struct AttentionGrads {
    std::optional<AdapterGrads> query;
    std::optional<AdapterGrads> value;
};

double attention_loss(const ToyAttentionLayer& layer, const std::vector<SequenceSample>& data);
AttentionGrads attention_gradients(const ToyAttentionLayer& layer, const std::vector<SequenceSample>& data);
GradCheckReport attention_gradient_check(const ToyAttentionLayer& layer, const std::vector<SequenceSample>& data,
                                         double h = 1e-5, std::size_t max_coords = 0, std::uint64_t seed = 0);

struct AttentionTrainResult {
    ToyAttentionLayer layer;
    std::vector<double> loss_trace;
    double final_loss = 0.0;
    GradCheckReport grad_check;
};

/// Gradient descent on the attached query/value adapters; base weights frozen.
AttentionTrainResult train_attention_adapters(const ToyAttentionLayer& layer, const std::vector<SequenceSample>& data,
                                              const TrainOptions& options);

// --- planted problems and persistence ------------------------------------

struct PlantedProblem {
    Matrix w;                  // frozen base
    RowVector u, v;            // target update u v^T
    std::vector<Sample> data;  // y = x (W + u v^T)
};

/// Gaussian base weights and inputs; u and v are unit-norm times `strength`.
PlantedProblem make_planted_rank1(std::size_t d, std::size_t k, std::size_t n_samples, std::uint64_t seed,
                                  double strength = 1.0);

/// JSON with d, k, r, target, a_data, b_data, scale, format_version.
std::string adapter_to_json(const LowRankAdapter& adapter);
LowRankAdapter adapter_from_json(std::string_view raw);
void save_adapter(const LowRankAdapter& adapter, const std::string& path);
LowRankAdapter load_adapter(const std::string& path);

}  // namespace lowres_rag::lora
