"""voxanon: classical voice anonymization and privacy/utility evaluation."""
