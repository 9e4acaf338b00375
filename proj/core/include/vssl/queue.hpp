#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vssl/errors.hpp"

namespace vssl {

// One stored embedding. class_id rides along for the NN-quality metric only;
// nothing on the training path reads it.
struct QueueEntry {
    std::vector<float> embedding; // unit norm
    int64_t video_id = -1;
    int class_id = -1;
};

inline constexpr double kUnitNormTol = 1e-5;

// Fixed-capacity FIFO of unit-norm embeddings. Serves both as the negative
// pool and as the NN candidate pool; eviction is strictly oldest-first and
// indices are oldest-first positions.
class EmbeddingQueue {
public:
    explicit EmbeddingQueue(int capacity);

    int capacity() const { return capacity_; }
    int size() const { return static_cast<int>(entries_.size()); }
    bool empty() const { return entries_.empty(); }
    const QueueEntry& at(int index) const;
    std::span<const QueueEntry> entries() const { return entries_; }

    // Appends a batch, evicting the oldest entries beyond capacity.
    // Non-unit embeddings and batches larger than the capacity are contract
    // errors; the embedding dimension is pinned by the first entry ever seen.
    void enqueue_batch(std::span<const QueueEntry> batch);

    struct NearestNeighbor {
        int index = -1;
        const QueueEntry* entry = nullptr;
        double similarity = 0.0;
    };

    // argmax over the queue of dot(x, entry); ties break toward the lowest
    // index (the oldest entry). Throws EmptyQueueError on an empty queue.
    NearestNeighbor nearest_neighbor(std::span<const float> x) const;

    // All entries except exclude_index, order preserved (the Q^- set).
    std::vector<QueueEntry> negatives_excluding(int exclude_index) const;

    // Dot product of x against every entry, oldest first.
    std::vector<float> similarity_row(std::span<const float> x) const;

    void clear();

private:
    int capacity_;
    int dim_ = -1;
    std::vector<QueueEntry> entries_; // index 0 = oldest
};

} // namespace vssl
