// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "streamedit/errors.hpp"

namespace streamedit {

/// Dense row-major matrix. Rows are tokens, columns are feature channels.
template <typename T>
class Matrix {
public:
    using value_type = T;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
        detail::require(data_.size() == rows_ * cols_, "Matrix: data size does not match rows*cols");
    }
    Matrix(std::initializer_list<std::initializer_list<T>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : init) {
            detail::require(r.size() == cols_, "Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    /// Columns [first, first + count) as a new matrix (one attention head).
    Matrix slice_cols(std::size_t first, std::size_t count) const {
        detail::require(first + count <= cols_, "Matrix::slice_cols out of range");
        Matrix out(rows_, count);
        for (std::size_t r = 0; r < rows_; ++r)
            std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_ + first), count, out.row(r).begin());
        return out;
    }

    void set_cols(std::size_t first, const Matrix& block) {
        detail::require(block.rows() == rows_ && first + block.cols() <= cols_, "Matrix::set_cols shape mismatch");
        for (std::size_t r = 0; r < rows_; ++r) std::copy(block.row(r).begin(), block.row(r).end(), row(r).begin() + first);
    }

    Matrix slice_rows(std::size_t first, std::size_t count) const {
        detail::require(first + count <= rows_, "Matrix::slice_rows out of range");
        auto b = data_.begin() + static_cast<std::ptrdiff_t>(first * cols_);
        return Matrix(count, cols_, std::vector<T>(b, b + static_cast<std::ptrdiff_t>(count * cols_)));
    }

    /// Appends the rows of `other`. An empty (0x0) matrix adopts the column count.
    void append_rows(const Matrix& other) {
        if (other.rows() == 0) return;
        if (rows_ == 0) cols_ = other.cols();
        detail::require(other.cols() == cols_, "Matrix::append_rows column mismatch");
        data_.insert(data_.end(), other.data_.begin(), other.data_.end());
        rows_ += other.rows();
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

template <typename T>
Matrix<T> vstack(std::initializer_list<const Matrix<T>*> parts) {
    Matrix<T> out;
    for (const auto* p : parts) out.append_rows(*p);
    return out;
}

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

struct LatentShape {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    std::size_t numel() const noexcept { return frames * height * width * channels; }
    std::size_t frame_size() const noexcept { return height * width * channels; }
    friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

inline std::string to_string(const LatentShape& s) {
    return "(" + std::to_string(s.frames) + "," + std::to_string(s.height) + "," + std::to_string(s.width) + "," +
           std::to_string(s.channels) + ")";
}

/// A block of video latent frames laid out (frames, height, width, channels), row-major.
class Latent {
public:
    Latent() = default;
    explicit Latent(LatentShape shape, float fill = 0.0f, std::size_t chunk_index = 0)
        : shape_(shape), data_(shape.numel(), fill), chunk_index_(chunk_index) {}
    Latent(LatentShape shape, std::vector<float> data, std::size_t chunk_index = 0)
        : shape_(shape), data_(std::move(data)), chunk_index_(chunk_index) {
        detail::require(data_.size() == shape_.numel(), "Latent: data size does not match shape " + to_string(shape_));
    }

    const LatentShape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t chunk_index() const noexcept { return chunk_index_; }
    void set_chunk_index(std::size_t c) noexcept { chunk_index_ = c; }

    float& at(std::size_t f, std::size_t h, std::size_t w, std::size_t c) { return data_[offset(f, h, w, c)]; }
    float at(std::size_t f, std::size_t h, std::size_t w, std::size_t c) const { return data_[offset(f, h, w, c)]; }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }
    std::vector<float>& data() noexcept { return data_; }
    const std::vector<float>& data() const noexcept { return data_; }

    Latent slice_frames(std::size_t first, std::size_t count) const {
        detail::require(first + count <= shape_.frames, "Latent::slice_frames out of range");
        LatentShape s = shape_;
        s.frames = count;
        auto b = data_.begin() + static_cast<std::ptrdiff_t>(first * shape_.frame_size());
        return Latent(s, std::vector<float>(b, b + static_cast<std::ptrdiff_t>(s.numel())));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
    }

    friend bool operator==(const Latent& a, const Latent& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    std::size_t offset(std::size_t f, std::size_t h, std::size_t w, std::size_t c) const {
        return ((f * shape_.height + h) * shape_.width + w) * shape_.channels + c;
    }

    LatentShape shape_;
    std::vector<float> data_;
    std::size_t chunk_index_ = 0;
};

inline void require_same_shape(const Latent& a, const Latent& b, const char* what) {
    if (!(a.shape() == b.shape()))
        throw InvalidArgument(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                              to_string(b.shape()));
}

inline Latent concat_frames(std::span<const Latent> parts) {
    detail::require(!parts.empty(), "concat_frames: nothing to concatenate");
    LatentShape s = parts.front().shape();
    s.frames = 0;
    std::vector<float> data;
    for (const auto& p : parts) {
        detail::require(p.shape().height == s.height && p.shape().width == s.width && p.shape().channels == s.channels,
                        "concat_frames: spatial dims differ");
        s.frames += p.shape().frames;
        data.insert(data.end(), p.data().begin(), p.data().end());
    }
    return Latent(s, std::move(data));
}

/// Splits a video into consecutive chunks of `chunk_frames`; the last chunk keeps its natural shorter length.
inline std::vector<Latent> split_chunks(const Latent& video, std::size_t chunk_frames) {
    detail::require(chunk_frames > 0, "split_chunks: chunk size must be positive");
    std::vector<Latent> out;
    for (std::size_t f = 0, c = 0; f < video.shape().frames; f += chunk_frames, ++c) {
        out.push_back(video.slice_frames(f, std::min(chunk_frames, video.shape().frames - f)));
        out.back().set_chunk_index(c);
    }
    return out;
}

inline float max_abs_diff(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "max_abs_diff");
    float m = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace streamedit
