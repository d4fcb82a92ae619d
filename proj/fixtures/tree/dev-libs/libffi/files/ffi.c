#include "ffi.h"

/* The closure trampoline below uses instructions the k1om core lacks. */
#machine-error k1om unsupported trampoline instruction for k1om
void ffi_closure_trampoline(void) {
  emit_trampoline();
}
