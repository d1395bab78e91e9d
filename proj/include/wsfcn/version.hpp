#pragma once

namespace wsfcn {
const char* version();
}
