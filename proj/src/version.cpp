#include "wsfcn/version.hpp"

namespace wsfcn {
const char* version() { return "0.1.0"; }
}
