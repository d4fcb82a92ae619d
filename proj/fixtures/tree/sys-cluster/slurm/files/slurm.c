int slurm_submit_batch_job(void *req) { return 0; }
