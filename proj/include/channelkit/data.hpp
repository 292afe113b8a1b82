// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file data.hpp
 * @brief Dataset ingestion: CIFAR-10 binary files, a synthetic Gaussian
 *        class-prototype generator, normalization and train-time
 *        augmentation.
 *
 * CIFAR-10 binary layout: records of 3073 bytes, one label byte (0-9)
 * followed by 3072 pixel bytes, channel-major R,G,B, row-major within each
 * channel. Pixels load as byte / 255 in [0, 1]; per-channel normalization
 * by training-split statistics is a separate explicit step.
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "channelkit/random.hpp"
#include "channelkit/tensor.hpp"

namespace channelkit {

struct Dataset {
    std::vector<Tensor> images;  // each (3, S, S)
    std::vector<int> labels;

    size_t size() const { return images.size(); }
    int64_t image_size() const { return images.empty() ? 0 : images.front().shape[1]; }

    void append(const Dataset& o) {
        images.insert(images.end(), o.images.begin(), o.images.end());
        labels.insert(labels.end(), o.labels.begin(), o.labels.end());
    }

    Dataset take(size_t n) const {
        Dataset out;
        const size_t k = std::min(n, size());
        out.images.assign(images.begin(), images.begin() + k);
        out.labels.assign(labels.begin(), labels.begin() + k);
        return out;
    }
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary files
// ---------------------------------------------------------------------------

inline constexpr int64_t kCifarRecordBytes = 3073;
inline constexpr int64_t kCifarImageBytes = 3072;
inline constexpr int64_t kCifarSide = 32;

inline Dataset load_cifar10(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cifar10: cannot open '" + path + "'");
    const int64_t file_size = static_cast<int64_t>(is.tellg());
    is.seekg(0);
    if (file_size % kCifarRecordBytes != 0)
        throw std::runtime_error("cifar10: '" + path + "' has " + std::to_string(file_size) +
                                 " bytes, not a multiple of 3073; truncated record at offset " +
                                 std::to_string((file_size / kCifarRecordBytes) *
                                                kCifarRecordBytes));
    const int64_t records = file_size / kCifarRecordBytes;
    Dataset ds;
    ds.images.reserve(records);
    ds.labels.reserve(records);
    std::vector<unsigned char> buf(kCifarRecordBytes);
    for (int64_t r = 0; r < records; ++r) {
        is.read(reinterpret_cast<char*>(buf.data()), kCifarRecordBytes);
        if (!is)
            throw std::runtime_error("cifar10: '" + path + "' read failed at record " +
                                     std::to_string(r));
        const int label = buf[0];
        if (label > 9)
            throw std::runtime_error("cifar10: '" + path + "' record " + std::to_string(r) +
                                     " has label byte " + std::to_string(label) + " > 9");
        Tensor img = Tensor::zeros({3, kCifarSide, kCifarSide});
        for (int64_t i = 0; i < kCifarImageBytes; ++i)
            img.data[i] = static_cast<double>(buf[1 + i]) / 255.0;
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);
    }
    return ds;
}

/// Loads data_batch_*.bin (train) and test_batch.bin (eval) from a directory.
inline std::pair<Dataset, Dataset> load_cifar10_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    Dataset train, test;
    for (int i = 1; i <= 5; ++i) {
        const std::string p = dir + "/data_batch_" + std::to_string(i) + ".bin";
        if (fs::exists(p)) train.append(load_cifar10(p));
    }
    const std::string tp = dir + "/test_batch.bin";
    if (fs::exists(tp)) test = load_cifar10(tp);
    if (train.size() == 0)
        throw std::runtime_error("cifar10: no data_batch_*.bin files under '" + dir + "'");
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

struct ChannelStats {
    std::array<double, 3> mean{0, 0, 0};
    std::array<double, 3> stddev{1, 1, 1};
};

inline ChannelStats compute_channel_stats(const Dataset& ds) {
    ChannelStats st;
    if (ds.size() == 0) return st;
    const int64_t plane = ds.images.front().shape[1] * ds.images.front().shape[2];
    std::array<double, 3> sum{0, 0, 0}, sq{0, 0, 0};
    for (const Tensor& img : ds.images)
        for (int c = 0; c < 3; ++c) {
            const double* p = &img.data[c * plane];
            for (int64_t i = 0; i < plane; ++i) {
                sum[c] += p[i];
                sq[c] += p[i] * p[i];
            }
        }
    const double n = static_cast<double>(ds.size() * plane);
    for (int c = 0; c < 3; ++c) {
        st.mean[c] = sum[c] / n;
        const double var = sq[c] / n - st.mean[c] * st.mean[c];
        st.stddev[c] = std::sqrt(var > 1e-12 ? var : 1e-12);
    }
    return st;
}

inline Dataset normalize(const Dataset& ds, const ChannelStats& st) {
    Dataset out = ds;
    if (ds.size() == 0) return out;
    const int64_t plane = ds.images.front().shape[1] * ds.images.front().shape[2];
    for (Tensor& img : out.images)
        for (int c = 0; c < 3; ++c) {
            double* p = &img.data[c * plane];
            for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - st.mean[c]) / st.stddev[c];
        }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic dataset: Gaussian class prototypes plus per-sample noise.
// Linearly separable at low noise. Prototypes depend only on the seed, so
// train and eval splits drawn with different split tags share classes.
// ---------------------------------------------------------------------------

inline Dataset synthetic_dataset(int n_classes, int per_class, int64_t size, double noise,
                                 uint64_t seed, const std::string& split = "train") {
    if (n_classes < 1 || per_class < 0 || size < 1)
        throw std::invalid_argument("synthetic_dataset: invalid dimensions");
    std::vector<Tensor> protos;
    protos.reserve(n_classes);
    for (int c = 0; c < n_classes; ++c) {
        Tensor p = Tensor::zeros({3, size, size});
        Rng rng(derive_seed(seed, "proto", static_cast<uint64_t>(c)));
        for (double& v : p.data) v = rng.normal();
        protos.push_back(std::move(p));
    }
    Dataset ds;
    Rng rng(derive_seed(seed, "samples." + split));
    for (int c = 0; c < n_classes; ++c)
        for (int s = 0; s < per_class; ++s) {
            Tensor img = protos[c];
            if (noise > 0.0)
                for (double& v : img.data) v += noise * rng.normal();
            ds.images.push_back(std::move(img));
            ds.labels.push_back(c);
        }
    return ds;
}

// ---------------------------------------------------------------------------
// Augmentation: pad 4, random crop back to size, horizontal flip w.p. 1/2.
// ---------------------------------------------------------------------------

inline constexpr int64_t kAugmentPad = 4;

/// Deterministic crop/flip given explicit offsets; dy, dx in [0, 2*pad].
inline Tensor augment_with(const Tensor& img, int64_t dy, int64_t dx, bool flip) {
    if (img.rank() != 3)
        throw std::invalid_argument("augment: expected (3, S, S) image, got " +
                                    shape_str(img.shape));
    const int64_t C = img.shape[0], S = img.shape[1];
    if (dy < 0 || dy > 2 * kAugmentPad || dx < 0 || dx > 2 * kAugmentPad)
        throw std::invalid_argument("augment: crop offset out of range");
    Tensor out = Tensor::zeros(img.shape);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < S; ++y) {
            const int64_t sy = y + dy - kAugmentPad;
            if (sy < 0 || sy >= S) continue;  // zero padding
            for (int64_t x = 0; x < S; ++x) {
                const int64_t sx = x + dx - kAugmentPad;
                if (sx < 0 || sx >= S) continue;
                const int64_t ox = flip ? S - 1 - x : x;
                out.data[(c * S + y) * S + ox] = img.data[(c * S + sy) * S + sx];
            }
        }
    return out;
}

inline Tensor augment(const Tensor& img, uint64_t seed) {
    Rng rng(seed);
    const int64_t dy = rng.below(2 * kAugmentPad + 1);
    const int64_t dx = rng.below(2 * kAugmentPad + 1);
    const bool flip = rng.next_unit() < 0.5;
    return augment_with(img, dy, dx, flip);
}

/// Stacks dataset rows into an NCHW batch tensor.
inline Tensor make_batch(const Dataset& ds, const std::vector<size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
    const Tensor& first = ds.images[indices[0]];
    Tensor out = Tensor::zeros({static_cast<int64_t>(indices.size()), first.shape[0],
                                first.shape[1], first.shape[2]});
    const int64_t per = first.numel();
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy(ds.images[indices[i]].data.begin(), ds.images[indices[i]].data.end(),
                  out.data.begin() + static_cast<int64_t>(i) * per);
    return out;
}

}  // namespace channelkit
