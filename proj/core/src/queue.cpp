#include "vssl/queue.hpp"

#include <cmath>
#include <string>

namespace vssl {

namespace {

double norm_of(std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    return std::sqrt(sq);
}

} // namespace

EmbeddingQueue::EmbeddingQueue(int capacity) : capacity_(capacity) {
    if (capacity <= 0) throw ConfigError("queue capacity must be positive, got " + std::to_string(capacity));
}

const QueueEntry& EmbeddingQueue::at(int index) const {
    if (index < 0 || index >= size())
        throw ContractError("queue index " + std::to_string(index) + " out of range for size " +
                            std::to_string(size()));
    return entries_[static_cast<size_t>(index)];
}

void EmbeddingQueue::enqueue_batch(std::span<const QueueEntry> batch) {
    if (static_cast<int>(batch.size()) > capacity_)
        throw ContractError("enqueue_batch: batch of " + std::to_string(batch.size()) +
                            " exceeds queue capacity " + std::to_string(capacity_));
    if (batch.empty()) return;
    // validate the whole batch before mutating any state
    const int dim = dim_ >= 0 ? dim_ : static_cast<int>(batch.front().embedding.size());
    for (const auto& e : batch) {
        if (static_cast<int>(e.embedding.size()) != dim)
            throw ContractError("enqueue_batch: embedding dim " + std::to_string(e.embedding.size()) +
                                " does not match queue dim " + std::to_string(dim));
        const double n = norm_of(e.embedding);
        if (std::abs(n - 1.0) > kUnitNormTol)
            throw ContractError("enqueue_batch: embedding norm " + std::to_string(n) + " is not 1");
    }
    dim_ = dim;
    entries_.insert(entries_.end(), batch.begin(), batch.end());
    if (static_cast<int>(entries_.size()) > capacity_) {
        const auto evict = entries_.size() - static_cast<size_t>(capacity_);
        entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(evict));
    }
}

EmbeddingQueue::NearestNeighbor EmbeddingQueue::nearest_neighbor(std::span<const float> x) const {
    if (entries_.empty()) throw EmptyQueueError("nearest_neighbor: queue is empty");
    NearestNeighbor best;
    for (int i = 0; i < size(); ++i) {
        double s = 0.0;
        const auto& z = entries_[static_cast<size_t>(i)].embedding;
        for (size_t j = 0; j < z.size(); ++j) s += static_cast<double>(x[j]) * z[j];
        if (best.index < 0 || s > best.similarity) {
            best.index = i;
            best.similarity = s;
        }
    }
    best.entry = &entries_[static_cast<size_t>(best.index)];
    return best;
}

std::vector<QueueEntry> EmbeddingQueue::negatives_excluding(int exclude_index) const {
    if (exclude_index < 0 || exclude_index >= size())
        throw ContractError("negatives_excluding: index " + std::to_string(exclude_index) +
                            " out of range for size " + std::to_string(size()));
    std::vector<QueueEntry> out;
    out.reserve(entries_.size() - 1);
    for (int i = 0; i < size(); ++i)
        if (i != exclude_index) out.push_back(entries_[static_cast<size_t>(i)]);
    return out;
}

std::vector<float> EmbeddingQueue::similarity_row(std::span<const float> x) const {
    if (entries_.empty()) throw EmptyQueueError("similarity_row: queue is empty");
    std::vector<float> row(entries_.size());
    for (size_t i = 0; i < entries_.size(); ++i) {
        double s = 0.0;
        const auto& z = entries_[i].embedding;
        for (size_t j = 0; j < z.size(); ++j) s += static_cast<double>(x[j]) * z[j];
        row[i] = static_cast<float>(s);
    }
    return row;
}

void EmbeddingQueue::clear() {
    entries_.clear();
}

} // namespace vssl
