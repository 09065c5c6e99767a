#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>

#include "itbn/errors.hpp"

namespace itbn {

// Exact decimal value digits * 10^exponent. Normalized so that digits is not
// divisible by 10 (zero is {0, 0}). Used for time stamps and resolutions so
// tick counts and gap gcds are exact; never derived from rounded floats.
struct Decimal {
    std::int64_t digits = 0;
    int exponent = 0;

    bool operator==(const Decimal&) const = default;

    static Decimal normalized(std::int64_t digits, int exponent) {
        while (digits != 0 && digits % 10 == 0) {
            digits /= 10;
            ++exponent;
        }
        if (digits == 0) exponent = 0;
        return Decimal{digits, exponent};
    }

    // Parses plain and scientific decimal notation ("12", "-0.25", "1e-06").
    static Decimal parse(std::string_view text) {
        std::size_t pos = 0;
        auto fail = [&]() -> Decimal {
            throw_data("invalid decimal literal '" + std::string(text) + "'");
        };
        if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) ++pos;
        const bool negative = !text.empty() && text[0] == '-';
        std::int64_t digits = 0;
        int frac_digits = 0;
        bool any = false;
        auto push_digit = [&](char c) {
            if (__builtin_mul_overflow(digits, std::int64_t{10}, &digits) ||
                __builtin_add_overflow(digits, std::int64_t{c - '0'}, &digits))
                throw_data("decimal literal out of range: '" + std::string(text) + "'");
            any = true;
        };
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])))
            push_digit(text[pos++]);
        if (pos < text.size() && text[pos] == '.') {
            ++pos;
            while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
                push_digit(text[pos++]);
                ++frac_digits;
            }
        }
        if (!any) return fail();
        int exp10 = -frac_digits;
        if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
            ++pos;
            int esign = 1;
            if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
                if (text[pos] == '-') esign = -1;
                ++pos;
            }
            if (pos >= text.size()) return fail();
            int evalue = 0;
            while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
                evalue = evalue * 10 + (text[pos] - '0');
                if (evalue > 400) throw_data("decimal exponent out of range: '" + std::string(text) + "'");
                ++pos;
            }
            exp10 += esign * evalue;
        }
        if (pos != text.size()) return fail();
        if (negative) digits = -digits;
        return normalized(digits, exp10);
    }

    // Exact conversion through the shortest round-trip representation.
    static Decimal from_double(double value) {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof(buf), value);
        if (res.ec != std::errc())
            throw_data("cannot represent value as a decimal");
        return parse(std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)));
    }

    double to_double() const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%lld" "e%d", static_cast<long long>(digits), exponent);
        return std::strtod(buf, nullptr);
    }

    std::string to_string() const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%lld" "e%d", static_cast<long long>(digits), exponent);
        return buf;
    }
};

// Exact integer ratio num/den, or nullopt when the ratio is not an integer.
inline std::optional<std::int64_t> exact_ratio(const Decimal& num, const Decimal& den) {
    if (den.digits == 0) return std::nullopt;
    if (num.digits == 0) return 0;
    std::int64_t a = num.digits;
    std::int64_t b = den.digits;
    int shift = num.exponent - den.exponent;
    while (shift > 0) {
        if (__builtin_mul_overflow(a, std::int64_t{10}, &a)) return std::nullopt;
        --shift;
    }
    while (shift < 0) {
        if (__builtin_mul_overflow(b, std::int64_t{10}, &b)) return std::nullopt;
        ++shift;
    }
    if (a % b != 0) return std::nullopt;
    return a / b;
}

// A declared time resolution; every model time must be an exact multiple.
struct Resolution {
    Decimal step{1, -6}; // default 1e-6 time units

    double value() const { return step.to_double(); }

    bool operator==(const Resolution&) const = default;

    static Resolution unit() { return Resolution{Decimal{1, 0}}; }

    static Resolution parse(std::string_view text) {
        Decimal d = Decimal::parse(text);
        if (d.digits <= 0) throw_usage("resolution must be positive");
        return Resolution{d};
    }

    static Resolution from_double(double r) {
        if (!(r > 0.0)) throw_usage("resolution must be positive");
        return Resolution{Decimal::from_double(r)};
    }

    // Ticks for an exactly represented decimal time; nullopt if not a multiple.
    std::optional<std::int64_t> ticks(const Decimal& time) const {
        return exact_ratio(time, step);
    }
};

} // namespace itbn
