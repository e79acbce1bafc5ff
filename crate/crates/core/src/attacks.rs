// attack suite
