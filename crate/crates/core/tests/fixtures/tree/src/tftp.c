#if TFTP_GET || TFTP_PUT // G v P
// ...
# if TFTP // T
int tftp_main(int argc, char **argv) {
	// ...
	#  if TFTP_BLOCKSIZE // B
	const char *blksize_str=TFTP_BLKSIZE_DEFAULT;
	// ...
	int blksize = tftp_blksize_check(blksize_str, 65564);
	if (blksize < 0) return EXIT_FAILURE;
	#  endif
	// ...
	#  if TFTP_DEBUG // D
	printf("blksize = %d\n", blksize);
	#  endif
	// ...
}
# endif
// ...
#endif
