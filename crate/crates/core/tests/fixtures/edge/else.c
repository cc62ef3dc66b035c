#if A
int a;
#else
int not_a;
#endif
