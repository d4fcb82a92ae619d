int munge_encode(char **cred) { return 0; }
