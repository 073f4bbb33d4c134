#include "cvae/rng.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cvae {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

void Rng::fill_normal(Tensor& t) {
    for (int64_t i = 0; i < t.size(); ++i) t[i] = normal();
}

Tensor Rng::normal_tensor(std::vector<int> shape) {
    Tensor t(std::move(shape));
    fill_normal(t);
    return t;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", spare_);  // hex float, exact round-trip
    os << buf;
    return os.str();
}

Rng Rng::deserialize(const std::string& s) {
    Rng r(0);
    std::istringstream is(s);
    int spare_flag = 0;
    std::string hex;
    is >> r.engine_ >> spare_flag >> hex;
    if (!is) throw std::runtime_error("Rng::deserialize: malformed state string");
    r.has_spare_ = spare_flag != 0;
    r.spare_ = std::strtod(hex.c_str(), nullptr);
    return r;
}

}  // namespace cvae
