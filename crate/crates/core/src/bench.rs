// bench harness
