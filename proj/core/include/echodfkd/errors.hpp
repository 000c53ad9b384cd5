#pragma once

#include <stdexcept>
#include <string>

namespace echodfkd {

struct Error : std::runtime_error {
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind(std::move(kind)) {}
    std::string kind;
};

#define ECHODFKD_ERROR(Name) \
    struct Name : Error { \
        explicit Name(const std::string& msg) : Error(#Name, msg) {} \
    }

ECHODFKD_ERROR(ShapeError);
ECHODFKD_ERROR(InputError);
ECHODFKD_ERROR(ConfigError);
ECHODFKD_ERROR(ManifestError);
ECHODFKD_ERROR(DegenerateTracing);
ECHODFKD_ERROR(InvalidTracing);
ECHODFKD_ERROR(PhantomConfigError);
ECHODFKD_ERROR(DegeneratePhantom);
ECHODFKD_ERROR(BudgetError);
ECHODFKD_ERROR(DivergenceError);
ECHODFKD_ERROR(DegenerateSeries);
ECHODFKD_ERROR(IoError);

#undef ECHODFKD_ERROR

}  // namespace echodfkd
