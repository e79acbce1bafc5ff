// end-to-end pipeline
