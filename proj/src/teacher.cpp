#include "afd/teacher.hpp"

#include <cmath>
#include <cstdio>

#include "afd/kernels.hpp"
#include "afd/rng.hpp"

namespace afd {

namespace {

std::string hex_digest(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t hash_doubles(uint64_t h, const std::vector<double>& v) {
    return fnv1a64(v.data(), v.size() * sizeof(double), h);
}

}  // namespace

// --- FileTeacher ---

FileTeacher::FileTeacher(data::TeacherTable table, size_t d_et)
    : table_(std::move(table)), d_et_(d_et) {
    for (const auto& [id, vec] : table_) {
        AFD_CHECK(vec.size() == d_et_, "dimension error: embedding for id '" + id +
                                           "' has length " + std::to_string(vec.size()) +
                                           ", expected " + std::to_string(d_et_));
    }
}

std::unique_ptr<FileTeacher> FileTeacher::load(const std::string& path, size_t d_et) {
    return std::make_unique<FileTeacher>(data::load_teacher_embeddings(path, d_et), d_et);
}

Tensor FileTeacher::embed(const data::EncodedBatch& batch) const {
    std::vector<double> out;
    out.reserve(batch.batch_size() * d_et_);
    for (const std::string& id : batch.ids) {
        auto it = table_.find(id);
        AFD_CHECK(it != table_.end(), "lookup error: no teacher embedding for id '" + id + "'");
        out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return Tensor({batch.batch_size(), d_et_}, std::move(out));
}

std::string FileTeacher::checksum() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [id, vec] : table_) {  // std::map: iteration order is sorted
        h = fnv1a64(id, h);
        h = hash_doubles(h, vec);
    }
    return hex_digest(h);
}

// --- SyntheticFrozenTeacher ---

SyntheticFrozenTeacher::SyntheticFrozenTeacher(uint64_t seed, size_t vocab, size_t d_et)
    : vocab_(vocab), d_et_(d_et) {
    AFD_CHECK(vocab >= 1 && d_et >= 1, "synthetic teacher: vocab and d_et must be >= 1");
    Rng root(seed);
    Rng erng = root.stream("teacher/embedding");
    std::vector<double> emb(vocab * d_et);
    for (auto& v : emb) v = erng.normal(0.0, 1.0 / std::sqrt(double(d_et)));
    token_embedding_ = Tensor({vocab, d_et}, std::move(emb));

    Rng mrng = root.stream("teacher/mixing");
    for (size_t k = 0; k < kLayers; ++k) {
        std::vector<double> m(d_et * d_et);
        for (auto& v : m) v = mrng.normal(0.0, 1.0 / std::sqrt(double(d_et)));
        mix_[k] = Tensor({d_et, d_et}, std::move(m));
    }
}

std::vector<std::vector<double>> SyntheticFrozenTeacher::hidden_states(
    const std::vector<int>& token_ids) const {
    std::vector<std::vector<double>> states;
    states.reserve(token_ids.size());
    for (int id : token_ids) {
        AFD_CHECK(id >= 0 && size_t(id) < vocab_,
                  "synthetic teacher: token id " + std::to_string(id) + " out of range");
        const double* emb = token_embedding_.data().data() + size_t(id) * d_et_;
        // averaged hidden state across the four mixing layers
        std::vector<double> avg(d_et_, 0.0);
        std::vector<double> h(d_et_);
        for (size_t k = 0; k < kLayers; ++k) {
            kernels::matmul_nn(h.data(), emb, mix_[k].data().data(), 1, d_et_, d_et_);
            for (size_t j = 0; j < d_et_; ++j) avg[j] += h[j];
        }
        for (double& v : avg) v *= 1.0 / double(kLayers);
        states.push_back(std::move(avg));
    }
    return states;
}

std::vector<double> SyntheticFrozenTeacher::masked_mean_pool(
    const std::vector<std::vector<double>>& states, const std::vector<double>& mask) {
    AFD_CHECK(states.size() == mask.size(), "masked_mean_pool: state/mask length mismatch");
    size_t d = states.empty() ? 0 : states[0].size();
    std::vector<double> pooled(d, 0.0);
    double count = 0.0;
    for (size_t l = 0; l < states.size(); ++l) {
        if (mask[l] == 0.0) continue;  // masked positions never touch the sum
        for (size_t j = 0; j < d; ++j) pooled[j] += states[l][j];
        count += 1.0;
    }
    AFD_CHECK(count > 0.0, "masked_mean_pool: degenerate-mask error, no valid position");
    for (double& v : pooled) v /= count;
    return pooled;
}

Tensor SyntheticFrozenTeacher::embed(const data::EncodedBatch& batch) const {
    std::vector<double> out;
    out.reserve(batch.batch_size() * d_et_);
    for (size_t i = 0; i < batch.batch_size(); ++i) {
        auto states = hidden_states(batch.token_ids[i]);
        auto pooled = masked_mean_pool(states, batch.mask[i]);
        out.insert(out.end(), pooled.begin(), pooled.end());
    }
    return Tensor({batch.batch_size(), d_et_}, std::move(out));
}

std::string SyntheticFrozenTeacher::checksum() const {
    uint64_t h = 0xcbf29ce484222325ull;
    h = hash_doubles(h, token_embedding_.data());
    for (const Tensor& m : mix_) h = hash_doubles(h, m.data());
    return hex_digest(h);
}

}  // namespace afd
