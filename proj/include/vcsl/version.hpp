#pragma once

#define VCSL_VERSION_MAJOR 1
#define VCSL_VERSION_MINOR 0
#define VCSL_VERSION_PATCH 0
#define VCSL_VERSION_STRING "1.0.0"

namespace vcsl {

inline const char* version() { return VCSL_VERSION_STRING; }

}  // namespace vcsl
