#include "lowres_rag/lora_lab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include <json.hpp>

#include "lowres_rag/errors.hpp"
#include "lowres_rag/resource_store.hpp"

namespace lowres_rag::lora {

using nlohmann::json;

namespace {

constexpr int kAdapterFormatVersion = 1;

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeMismatch(what);
}

void check_rank(std::size_t d, std::size_t k, std::size_t r) {
    if (d == 0 || k == 0) throw InvalidRank("matrix dimensions must be positive");
    if (r == 0 || r > std::min(d, k))
        throw InvalidRank("rank " + std::to_string(r) + " outside [1, min(" + std::to_string(d) + ", " +
                          std::to_string(k) + ")]");
}

// Central differences on the coordinates behind `coords`, evaluated with
// `loss` after each perturbation.
GradCheckReport check_coords(const std::vector<double*>& coords, const std::vector<double>& analytic,
                             const std::function<double()>& loss, double h, std::size_t max_coords,
                             std::uint64_t seed) {
    std::vector<std::size_t> order(coords.size());
    std::iota(order.begin(), order.end(), 0);
    if (max_coords != 0 && max_coords < order.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(max_coords);
    }
    GradCheckReport report;
    for (std::size_t idx : order) {
        double* p = coords[idx];
        const double saved = *p;
        *p = saved + h;
        const double up = loss();
        *p = saved - h;
        const double down = loss();
        *p = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double g = analytic[idx];
        const double denom = std::max({std::abs(g), std::abs(numeric), 1e-8});
        report.max_rel_error = std::max(report.max_rel_error, std::abs(g - numeric) / denom);
        ++report.coords_checked;
    }
    return report;
}

void append_coords(Matrix& m, std::vector<double*>& coords) {
    for (double& x : m.data()) coords.push_back(&x);
}

void append_values(const Matrix& m, std::vector<double>& values) {
    values.insert(values.end(), m.data().begin(), m.data().end());
}

// dA = s * G_W * B^T, dB = s * A^T * G_W
AdapterGrads adapter_grads_from_weight_grad(const Matrix& g_w, const LowRankAdapter& ad) {
    return {ad.scale * matmul(g_w, transpose(ad.b)), ad.scale * matmul(transpose(ad.a), g_w)};
}

void descend(LowRankAdapter& ad, const AdapterGrads& g, double lr) {
    for (std::size_t i = 0; i < ad.a.data().size(); ++i) ad.a.data()[i] -= lr * g.a.data()[i];
    for (std::size_t i = 0; i < ad.b.data().size(); ++i) ad.b.data()[i] -= lr * g.b.data()[i];
}

Matrix softmax_rows(const Matrix& s) {
    Matrix p(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double mx = s(i, 0);
        for (std::size_t j = 1; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < s.cols(); ++j) z += (p(i, j) = std::exp(s(i, j) - mx));
        for (std::size_t j = 0; j < s.cols(); ++j) p(i, j) /= z;
    }
    return p;
}

Matrix effective(const Matrix& w, const std::optional<LowRankAdapter>& ad) {
    return ad ? apply_adapter(w, *ad) : w;
}

}  // namespace

// --- Matrix -------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "data size " + std::to_string(data_.size()) + " does not match " +
                                               std::to_string(rows_) + "x" + std::to_string(cols_));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    for (const auto& row : rows) {
        require(row.size() == c, "ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "cannot multiply " + shape_str(a) + " by " + shape_str(b));
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t l = 0; l < a.cols(); ++l) {
            const double x = a(i, l);
            if (x == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += x * b(l, j);
        }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "cannot add " + shape_str(a) + " and " + shape_str(b));
    Matrix out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

Matrix operator*(double s, const Matrix& m) {
    Matrix out = m;
    for (double& x : out.data()) x *= s;
    return out;
}

RowVector row_times(const RowVector& x, const Matrix& m) {
    require(x.size() == m.rows(), "row vector of length " + std::to_string(x.size()) + " times " + shape_str(m));
    RowVector out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += x[i] * m(i, j);
    return out;
}

std::uint64_t checksum(const Matrix& m) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ (m.rows() * 1315423911ULL) ^ m.cols();
    for (double x : m.data()) {
        h ^= std::bit_cast<std::uint64_t>(x);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// --- adapters -------------------------------------------------------------

std::string_view to_string(AdapterTarget t) {
    switch (t) {
        case AdapterTarget::query: return "query";
        case AdapterTarget::value: return "value";
        case AdapterTarget::generic: return "generic";
    }
    return "generic";
}

AdapterTarget adapter_target_from_string(std::string_view s) {
    if (s == "query") return AdapterTarget::query;
    if (s == "value") return AdapterTarget::value;
    if (s == "generic") return AdapterTarget::generic;
    throw DataError("unknown adapter target: " + std::string(s));
}

void LowRankAdapter::validate() const {
    require(a.cols() == b.rows(), "A is " + shape_str(a) + " but B is " + shape_str(b));
    check_rank(a.rows(), b.cols(), a.cols());
    for (double x : a.data())
        if (!std::isfinite(x)) throw DataError("adapter A has non-finite entries");
    for (double x : b.data())
        if (!std::isfinite(x)) throw DataError("adapter B has non-finite entries");
}

Matrix delta_w(const LowRankAdapter& adapter) {
    adapter.validate();
    Matrix d = matmul(adapter.a, adapter.b);
    return adapter.scale == 1.0 ? d : adapter.scale * d;
}

Matrix apply_adapter(const Matrix& w, const LowRankAdapter& adapter) {
    require(w.rows() == adapter.in_dim() && w.cols() == adapter.out_dim(),
            "W is " + shape_str(w) + " but adapter is " + std::to_string(adapter.in_dim()) + "x" +
                std::to_string(adapter.out_dim()));
    return w + delta_w(adapter);
}

RowVector adapted_forward(const RowVector& x, const Matrix& w, const LowRankAdapter& adapter) {
    adapter.validate();
    require(w.rows() == adapter.in_dim() && w.cols() == adapter.out_dim(), "W does not match adapter shape");
    RowVector base = row_times(x, w);
    const RowVector low = row_times(row_times(x, adapter.a), adapter.b);
    for (std::size_t j = 0; j < base.size(); ++j) base[j] += adapter.scale * low[j];
    return base;
}

ParamCount trainable_param_count(std::size_t d, std::size_t k, std::size_t r) {
    check_rank(d, k, r);
    ParamCount pc;
    pc.lora_params = d * r + r * k;
    pc.full_params = d * k;
    pc.ratio = static_cast<double>(pc.lora_params) / static_cast<double>(pc.full_params);
    pc.rank_warning = 2 * r >= std::min(d, k);
    return pc;
}

LowRankAdapter init_adapter(std::size_t d, std::size_t k, std::size_t r, std::uint64_t seed, AdapterTarget target) {
    check_rank(d, k, r);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    LowRankAdapter ad{Matrix(d, r), Matrix(r, k), target, 1.0};
    for (double& x : ad.a.data()) x = normal(rng);
    return ad;
}

// --- projection training ---------------------------------------------------

double mse_loss(const Matrix& w, const LowRankAdapter& adapter, const std::vector<Sample>& data) {
    if (data.empty()) throw ShapeMismatch("empty dataset");
    double sum = 0.0;
    for (const auto& s : data) {
        require(s.y.size() == w.cols(), "target length does not match W columns");
        const RowVector yhat = adapted_forward(s.x, w, adapter);
        for (std::size_t j = 0; j < yhat.size(); ++j) sum += (yhat[j] - s.y[j]) * (yhat[j] - s.y[j]);
    }
    return sum / static_cast<double>(data.size() * w.cols());
}

AdapterGrads mse_gradients(const Matrix& w, const LowRankAdapter& adapter, const std::vector<Sample>& data) {
    if (data.empty()) throw ShapeMismatch("empty dataset");
    const double norm = 2.0 / static_cast<double>(data.size() * w.cols());
    Matrix g_w(w.rows(), w.cols());
    for (const auto& s : data) {
        require(s.y.size() == w.cols(), "target length does not match W columns");
        RowVector g_y = adapted_forward(s.x, w, adapter);
        for (std::size_t j = 0; j < g_y.size(); ++j) g_y[j] = norm * (g_y[j] - s.y[j]);
        for (std::size_t i = 0; i < w.rows(); ++i) {
            if (s.x[i] == 0.0) continue;
            for (std::size_t j = 0; j < w.cols(); ++j) g_w(i, j) += s.x[i] * g_y[j];
        }
    }
    return adapter_grads_from_weight_grad(g_w, adapter);
}

GradCheckReport gradient_check(const Matrix& w, const LowRankAdapter& adapter, const std::vector<Sample>& data,
                               double h, std::size_t max_coords, std::uint64_t seed) {
    const AdapterGrads g = mse_gradients(w, adapter, data);
    LowRankAdapter probe = adapter;
    std::vector<double*> coords;
    std::vector<double> analytic;
    append_coords(probe.a, coords);
    append_coords(probe.b, coords);
    append_values(g.a, analytic);
    append_values(g.b, analytic);
    return check_coords(coords, analytic, [&] { return mse_loss(w, probe, data); }, h, max_coords, seed);
}

TrainResult train_adapter(const Matrix& w, const std::vector<Sample>& data, LowRankAdapter init,
                          const TrainOptions& options) {
    if (options.steps == 0) throw DataError("steps must be at least 1");
    if (!(options.lr > 0.0)) throw DataError("learning rate must be positive");
    init.validate();
    require(w.rows() == init.in_dim() && w.cols() == init.out_dim(), "W does not match adapter shape");
    for (const auto& s : data) require(s.x.size() == w.rows() && s.y.size() == w.cols(), "sample shape mismatch");

    TrainResult result{std::move(init), {}, 0.0, {}};
    result.loss_trace.reserve(options.steps);
    for (std::size_t step = 0; step < options.steps; ++step) {
        const double loss = mse_loss(w, result.adapter, data);
        if (!std::isfinite(loss)) throw NonFiniteLoss(step);
        result.loss_trace.push_back(loss);
        descend(result.adapter, mse_gradients(w, result.adapter, data), options.lr);
        if (step == 0)
            result.grad_check = gradient_check(w, result.adapter, data, 1e-5, options.grad_check_coords, options.seed);
    }
    result.final_loss = mse_loss(w, result.adapter, data);
    if (!std::isfinite(result.final_loss)) throw NonFiniteLoss(options.steps);
    return result;
}

// --- attention ---------------------------------------------------------------

void ToyAttentionLayer::attach(LowRankAdapter adapter) {
    adapter.validate();
    switch (adapter.target) {
        case AdapterTarget::query:
            require(adapter.in_dim() == w_q.rows() && adapter.out_dim() == w_q.cols(), "query adapter shape");
            query_adapter = std::move(adapter);
            return;
        case AdapterTarget::value:
            require(adapter.in_dim() == w_v.rows() && adapter.out_dim() == w_v.cols(), "value adapter shape");
            value_adapter = std::move(adapter);
            return;
        case AdapterTarget::generic: break;
    }
    throw DataError("attention layers only take query or value adapters");
}

Matrix ToyAttentionLayer::forward(const Matrix& x) const {
    const Matrix q = matmul(x, effective(w_q, query_adapter));
    const Matrix k = matmul(x, w_k);
    const Matrix v = matmul(x, effective(w_v, value_adapter));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w_q.cols()));
    return matmul(softmax_rows(inv_sqrt * matmul(q, transpose(k))), v);
}

double attention_loss(const ToyAttentionLayer& layer, const std::vector<SequenceSample>& data) {
    if (data.empty()) throw ShapeMismatch("empty dataset");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& s : data) {
        const Matrix o = layer.forward(s.x);
        require(o.rows() == s.y.rows() && o.cols() == s.y.cols(), "target shape mismatch");
        for (std::size_t i = 0; i < o.data().size(); ++i) {
            const double e = o.data()[i] - s.y.data()[i];
            sum += e * e;
        }
        count += o.data().size();
    }
    return sum / static_cast<double>(count);
}

AttentionGrads attention_gradients(const ToyAttentionLayer& layer, const std::vector<SequenceSample>& data) {
    if (data.empty()) throw ShapeMismatch("empty dataset");
    std::size_t count = 0;
    for (const auto& s : data) count += s.y.data().size();
    const double norm = 2.0 / static_cast<double>(count);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(layer.w_q.cols()));
    const Matrix wq = effective(layer.w_q, layer.query_adapter);
    const Matrix wv = effective(layer.w_v, layer.value_adapter);

    Matrix g_wq(wq.rows(), wq.cols());
    Matrix g_wv(wv.rows(), wv.cols());
    for (const auto& s : data) {
        const Matrix q = matmul(s.x, wq);
        const Matrix k = matmul(s.x, layer.w_k);
        const Matrix v = matmul(s.x, wv);
        const Matrix p = softmax_rows(inv_sqrt * matmul(q, transpose(k)));
        Matrix g_o = matmul(p, v);
        require(g_o.rows() == s.y.rows() && g_o.cols() == s.y.cols(), "target shape mismatch");
        for (std::size_t i = 0; i < g_o.data().size(); ++i) g_o.data()[i] = norm * (g_o.data()[i] - s.y.data()[i]);

        const Matrix g_v = matmul(transpose(p), g_o);
        const Matrix g_p = matmul(g_o, transpose(v));
        Matrix g_s(p.rows(), p.cols());
        for (std::size_t i = 0; i < p.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < p.cols(); ++j) dot += g_p(i, j) * p(i, j);
            for (std::size_t j = 0; j < p.cols(); ++j) g_s(i, j) = p(i, j) * (g_p(i, j) - dot);
        }
        const Matrix g_q = inv_sqrt * matmul(g_s, k);
        g_wq = g_wq + matmul(transpose(s.x), g_q);
        g_wv = g_wv + matmul(transpose(s.x), g_v);
    }
    AttentionGrads out;
    if (layer.query_adapter) out.query = adapter_grads_from_weight_grad(g_wq, *layer.query_adapter);
    if (layer.value_adapter) out.value = adapter_grads_from_weight_grad(g_wv, *layer.value_adapter);
    return out;
}

GradCheckReport attention_gradient_check(const ToyAttentionLayer& layer, const std::vector<SequenceSample>& data,
                                         double h, std::size_t max_coords, std::uint64_t seed) {
    const AttentionGrads g = attention_gradients(layer, data);
    ToyAttentionLayer probe = layer;
    std::vector<double*> coords;
    std::vector<double> analytic;
    if (probe.query_adapter) {
        append_coords(probe.query_adapter->a, coords);
        append_coords(probe.query_adapter->b, coords);
        append_values(g.query->a, analytic);
        append_values(g.query->b, analytic);
    }
    if (probe.value_adapter) {
        append_coords(probe.value_adapter->a, coords);
        append_coords(probe.value_adapter->b, coords);
        append_values(g.value->a, analytic);
        append_values(g.value->b, analytic);
    }
    return check_coords(coords, analytic, [&] { return attention_loss(probe, data); }, h, max_coords, seed);
}

AttentionTrainResult train_attention_adapters(const ToyAttentionLayer& layer, const std::vector<SequenceSample>& data,
                                              const TrainOptions& options) {
    if (options.steps == 0) throw DataError("steps must be at least 1");
    if (!(options.lr > 0.0)) throw DataError("learning rate must be positive");
    if (!layer.query_adapter && !layer.value_adapter) throw DataError("no adapters attached");

    AttentionTrainResult result{layer, {}, 0.0, {}};
    result.loss_trace.reserve(options.steps);
    for (std::size_t step = 0; step < options.steps; ++step) {
        const double loss = attention_loss(result.layer, data);
        if (!std::isfinite(loss)) throw NonFiniteLoss(step);
        result.loss_trace.push_back(loss);
        const AttentionGrads g = attention_gradients(result.layer, data);
        if (g.query) descend(*result.layer.query_adapter, *g.query, options.lr);
        if (g.value) descend(*result.layer.value_adapter, *g.value, options.lr);
        if (step == 0)
            result.grad_check =
                attention_gradient_check(result.layer, data, 1e-5, options.grad_check_coords, options.seed);
    }
    result.final_loss = attention_loss(result.layer, data);
    if (!std::isfinite(result.final_loss)) throw NonFiniteLoss(options.steps);
    return result;
}

// --- planted problems / persistence ----------------------------------------

PlantedProblem make_planted_rank1(std::size_t d, std::size_t k, std::size_t n_samples, std::uint64_t seed,
                                  double strength) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    PlantedProblem p;
    p.w = Matrix(d, k);
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& x : p.w.data()) x = w_scale * normal(rng);
    auto unit = [&](std::size_t n) {
        RowVector v(n);
        for (double& x : v) x = normal(rng);
        double s = 0.0;
        for (double x : v) s += x * x;
        s = std::sqrt(s);
        for (double& x : v) x /= s;
        return v;
    };
    p.u = unit(d);
    p.v = unit(k);
    for (double& x : p.u) x *= std::sqrt(strength);
    for (double& x : p.v) x *= std::sqrt(strength);
    Matrix target = p.w;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < k; ++j) target(i, j) += p.u[i] * p.v[j];
    for (std::size_t n = 0; n < n_samples; ++n) {
        RowVector x(d);
        for (double& e : x) e = normal(rng);
        p.data.push_back({x, row_times(x, target)});
    }
    return p;
}

std::string adapter_to_json(const LowRankAdapter& adapter) {
    adapter.validate();
    const json j{{"format_version", kAdapterFormatVersion},
                 {"d", adapter.in_dim()},
                 {"k", adapter.out_dim()},
                 {"r", adapter.rank()},
                 {"target", to_string(adapter.target)},
                 {"scale", adapter.scale},
                 {"a_data", adapter.a.data()},
                 {"b_data", adapter.b.data()}};
    return j.dump(2) + "\n";
}

LowRankAdapter adapter_from_json(std::string_view raw) {
    json j;
    std::size_t d = 0, k = 0, r = 0;
    std::vector<double> a, b;
    LowRankAdapter ad;
    try {
        j = json::parse(raw);
        if (j.at("format_version").get<int>() != kAdapterFormatVersion)
            throw CorruptAdapterFile("unsupported adapter format_version");
        d = j.at("d").get<std::size_t>();
        k = j.at("k").get<std::size_t>();
        r = j.at("r").get<std::size_t>();
        ad.target = adapter_target_from_string(j.at("target").get<std::string>());
        ad.scale = j.at("scale").get<double>();
        a = j.at("a_data").get<std::vector<double>>();
        b = j.at("b_data").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw CorruptAdapterFile(std::string("corrupt adapter file: ") + e.what());
    } catch (const CorruptAdapterFile&) {
        throw;
    } catch (const DataError& e) {
        throw CorruptAdapterFile(e.what());
    }
    if (a.size() != d * r || b.size() != r * k)
        throw ShapeMismatch("adapter data does not match declared d=" + std::to_string(d) + " k=" + std::to_string(k) +
                            " r=" + std::to_string(r));
    ad.a = Matrix(d, r, std::move(a));
    ad.b = Matrix(r, k, std::move(b));
    ad.validate();
    return ad;
}

void save_adapter(const LowRankAdapter& adapter, const std::string& path) {
    write_file(path, adapter_to_json(adapter));
}

LowRankAdapter load_adapter(const std::string& path) {
    return adapter_from_json(read_file(path));
}

}  // namespace lowres_rag::lora
