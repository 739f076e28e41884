#ifndef ASCNET_VERSION_HPP
#define ASCNET_VERSION_HPP

namespace ascnet {
inline constexpr const char* kToolVersion = "0.1.0";
}

#endif  // ASCNET_VERSION_HPP
