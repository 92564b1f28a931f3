#include "modlens/bigint.hpp"

#include "modlens/errors.hpp"

#include <algorithm>

namespace modlens {

BigUint::BigUint(uint64_t v) {
    digits_.clear();
    do {
        digits_.push_back(static_cast<uint8_t>(v % 10));
        v /= 10;
    } while (v != 0);
}

BigUint BigUint::from_string(std::string_view s) {
    if (s.empty()) throw DataError("BigUint: empty string");
    BigUint out;
    out.digits_.assign(s.size(), 0);
    for (size_t i = 0; i < s.size(); ++i) {
        const char c = s[s.size() - 1 - i];
        if (c < '0' || c > '9') throw DataError("BigUint: non-digit character in input");
        out.digits_[i] = static_cast<uint8_t>(c - '0');
    }
    out.trim();
    return out;
}

std::string BigUint::to_string() const {
    std::string s(digits_.size(), '0');
    for (size_t i = 0; i < digits_.size(); ++i) {
        s[digits_.size() - 1 - i] = static_cast<char>('0' + digits_[i]);
    }
    return s;
}

bool BigUint::fits_u64() const {
    // 2^64-1 = 18446744073709551615 has 20 digits.
    if (digits_.size() < 20) return true;
    if (digits_.size() > 20) return false;
    static const BigUint kMax{UINT64_MAX};
    return !(kMax < *this);
}

uint64_t BigUint::to_u64() const {
    if (!fits_u64()) throw DataError("BigUint: value does not fit in 64 bits");
    uint64_t v = 0;
    for (size_t i = digits_.size(); i-- > 0;) v = v * 10 + digits_[i];
    return v;
}

BigUint BigUint::operator+(const BigUint& rhs) const {
    BigUint out;
    const size_t n = std::max(digits_.size(), rhs.digits_.size());
    out.digits_.assign(n + 1, 0);
    int carry = 0;
    for (size_t i = 0; i < n; ++i) {
        const int d = digit(i) + rhs.digit(i) + carry;
        out.digits_[i] = static_cast<uint8_t>(d % 10);
        carry = d / 10;
    }
    out.digits_[n] = static_cast<uint8_t>(carry);
    out.trim();
    return out;
}

BigUint BigUint::operator*(const BigUint& rhs) const {
    BigUint out;
    out.digits_.assign(digits_.size() + rhs.digits_.size(), 0);
    for (size_t i = 0; i < digits_.size(); ++i) {
        if (digits_[i] == 0) continue;
        int carry = 0;
        for (size_t j = 0; j < rhs.digits_.size(); ++j) {
            const int d = out.digits_[i + j] + digits_[i] * rhs.digits_[j] + carry;
            out.digits_[i + j] = static_cast<uint8_t>(d % 10);
            carry = d / 10;
        }
        size_t k = i + rhs.digits_.size();
        while (carry != 0) {
            const int d = out.digits_[k] + carry;
            out.digits_[k] = static_cast<uint8_t>(d % 10);
            carry = d / 10;
            ++k;
        }
    }
    out.trim();
    return out;
}

BigUint BigUint::mod_pow10(size_t k) const {
    if (k == 0) return BigUint{0};
    BigUint out;
    out.digits_.assign(digits_.begin(), digits_.begin() + std::min(k, digits_.size()));
    if (out.digits_.empty()) out.digits_.push_back(0);
    out.trim();
    return out;
}

uint64_t BigUint::mod_u64(uint64_t m) const {
    if (m == 0) throw DataError("BigUint: modulus must be >= 1");
    if (m >= (1ull << 60)) throw DataError("BigUint: modulus too large");
    uint64_t rem = 0;
    for (size_t i = digits_.size(); i-- > 0;) {
        rem = (rem * 10 + digits_[i]) % m;
    }
    return rem;
}

bool BigUint::operator<(const BigUint& rhs) const {
    if (digits_.size() != rhs.digits_.size()) return digits_.size() < rhs.digits_.size();
    for (size_t i = digits_.size(); i-- > 0;) {
        if (digits_[i] != rhs.digits_[i]) return digits_[i] < rhs.digits_[i];
    }
    return false;
}

void BigUint::trim() {
    while (digits_.size() > 1 && digits_.back() == 0) digits_.pop_back();
}

} // namespace modlens
