#include "lowres_rag/embedding.hpp"

#include <cmath>

#include <json.hpp>

#include "lowres_rag/text.hpp"

namespace lowres_rag {

using nlohmann::json;

std::vector<EmbeddingVector> EmbeddingProvider::embed_batch(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        try {
            out.push_back(embed(texts[i]));
        } catch (const RemoteError& e) {
            throw BatchItemError(i, e.what());
        }
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double l2_norm(const EmbeddingVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

OfflineEmbedder::OfflineEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
}

EmbeddingVector OfflineEmbedder::embed(std::string_view input) const {
    EmbeddingVector v(dim_, 0.0);
    const auto chars = text::code_points(text::fold(input));
    if (chars.empty()) return v;
    if (chars.size() < 3) {
        v[fnv1a64(text::join(chars, "")) % dim_] += 1.0;
    } else {
        for (std::size_t i = 0; i + 3 <= chars.size(); ++i) {
            const std::string gram = chars[i] + chars[i + 1] + chars[i + 2];
            v[fnv1a64(gram) % dim_] += 1.0;
        }
    }
    const double n = l2_norm(v);
    for (double& x : v) x /= n;
    return v;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)), limiter_(config_.max_in_flight) {}

std::size_t RemoteEmbedder::dim() const {
    std::lock_guard lock(dim_mu_);
    return dim_;
}

EmbeddingVector RemoteEmbedder::embed(std::string_view input) const {
    const json req{{"model", config_.model}, {"input", json::array({std::string(input)})}};
    auto result = post_with_retry(*transport_, limiter_, config_.retry, config_.path, req.dump(), default_json_headers());
    EmbeddingVector v;
    try {
        const json resp = json::parse(result.response.body);
        v = resp.at("data").at(0).at("embedding").get<EmbeddingVector>();
    } catch (const json::exception& e) {
        throw RemoteUnavailable(std::string("malformed embedding response: ") + e.what());
    }
    for (double x : v)
        if (!std::isfinite(x)) throw RemoteUnavailable("embedding response contains non-finite values");
    std::lock_guard lock(dim_mu_);
    if (dim_ == 0) {
        if (v.empty()) throw RemoteUnavailable("embedding response is empty");
        dim_ = v.size();
    } else if (v.size() != dim_) {
        throw DimensionMismatch(dim_, v.size());
    }
    return v;
}

}  // namespace lowres_rag
