#pragma once

#define JBSD_VERSION_MAJOR 0
#define JBSD_VERSION_MINOR 1
#define JBSD_VERSION_PATCH 0
#define JBSD_VERSION_STRING "0.1.0"
