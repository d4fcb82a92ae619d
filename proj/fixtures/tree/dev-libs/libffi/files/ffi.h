typedef struct ffi_cif ffi_cif;
void ffi_closure_trampoline(void);
