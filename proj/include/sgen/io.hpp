#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgen/errors.hpp"

namespace sgen {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Little-endian byte stream helpers used by all SGEN-* binary formats.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void magic(const char tag[9]) { // 8-char tag
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(tag[i]));
    }
    void bytes(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
    // row-major matrix of f64
    void matrix(const Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
    void vector(const Eigen::VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
    }
    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    void expect_magic(const char tag[9], const std::string& what) {
        need(8);
        if (std::memcmp(buf_.data() + pos_, tag, 8) != 0)
            throw BadMagic("bad magic, expected " + what);
        pos_ += 8;
    }
    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
        return m;
    }
    Eigen::VectorXd vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = f64();
        return v;
    }
    const std::uint8_t* raw(std::size_t n) {
        need(n);
        const std::uint8_t* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw TruncatedPayload("unexpected end of data");
    }
    const std::vector<std::uint8_t>& buf_;
    std::size_t pos_ = 0;
};

} // namespace sgen
