#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "lowres_rag/errors.hpp"
#include "lowres_rag/http.hpp"

namespace lowres_rag {

using EmbeddingVector = std::vector<double>;

/// f_embed: text -> fixed-dimension real vector.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual bool deterministic() const = 0;
    virtual EmbeddingVector embed(std::string_view text) const = 0;

    /// Element i equals embed(texts[i]). A remote failure is rethrown as
    /// BatchItemError naming the failing index.
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
};

class BatchItemError : public RemoteUnavailable {
public:
    BatchItemError(std::size_t index, const std::string& what)
        : RemoteUnavailable("batch item " + std::to_string(index) + ": " + what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// Hashed bag of character 3-grams. The text is case folded and NFC
/// normalized, every 3-gram of code points adds 1 to bucket
/// fnv1a64(utf8 bytes) % dim, and the result is L2-normalized. Texts shorter
/// than three code points count as one gram so that only "" maps to zero.
class OfflineEmbedder final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultDim = 512;

    explicit OfflineEmbedder(std::size_t dim = kDefaultDim);

    std::string name() const override { return "offline-char3-" + std::to_string(dim_); }
    std::size_t dim() const override { return dim_; }
    bool deterministic() const override { return true; }
    EmbeddingVector embed(std::string_view text) const override;

private:
    std::size_t dim_;
};

struct RemoteEmbedderConfig {
    std::string base_url;
    std::string path = "/v1/embeddings";
    std::string model = "text-embedding-3-small";
    std::size_t max_in_flight = 4;
    RetryPolicy retry;
};

/// Speaks {"model", "input": [...]} -> {"data": [{"embedding": [...]}]}.
/// The dimension is pinned by the first successful response.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    RemoteEmbedder(RemoteEmbedderConfig config, std::shared_ptr<HttpTransport> transport);

    std::string name() const override { return "remote:" + config_.model; }
    /// 0 until the first response has been seen.
    std::size_t dim() const override;
    bool deterministic() const override { return false; }
    EmbeddingVector embed(std::string_view text) const override;

    const InFlightLimiter& limiter() const { return limiter_; }

private:
    RemoteEmbedderConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    mutable InFlightLimiter limiter_;
    mutable std::mutex dim_mu_;
    mutable std::size_t dim_ = 0;
};

double l2_norm(const EmbeddingVector& v);

}  // namespace lowres_rag
