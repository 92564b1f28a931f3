#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace modlens {

// Unsigned integer stored as decimal digits, least-significant first.
// The decimal representation is the native currency of this project (token
// encodings, mod-10^k reduction), so the limb base is 10.
class BigUint {
public:
    BigUint() : digits_{0} {}
    explicit BigUint(uint64_t v);
    static BigUint from_string(std::string_view s); // throws on non-digit input

    std::string to_string() const;
    bool fits_u64() const;
    uint64_t to_u64() const; // throws DataError when the value exceeds 64 bits

    size_t digit_count() const { return digits_.size(); }
    // Decimal digit at 10^i, zero beyond the stored width.
    int digit(size_t i) const { return i < digits_.size() ? digits_[i] : 0; }

    bool is_zero() const { return digits_.size() == 1 && digits_[0] == 0; }

    BigUint operator+(const BigUint& rhs) const;
    BigUint operator*(const BigUint& rhs) const;

    // Value mod 10^k: plain digit truncation.
    BigUint mod_pow10(size_t k) const;
    // Value mod m for any m >= 1 (m < 2^60 so the running remainder fits).
    uint64_t mod_u64(uint64_t m) const;

    bool operator==(const BigUint& rhs) const { return digits_ == rhs.digits_; }
    bool operator!=(const BigUint& rhs) const { return !(*this == rhs); }
    bool operator<(const BigUint& rhs) const;

private:
    void trim();
    std::vector<uint8_t> digits_; // little-endian decimal digits, never empty
};

} // namespace modlens
