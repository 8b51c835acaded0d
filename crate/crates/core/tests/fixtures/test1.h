class test1: base_t
{
  int x,y;
public:
  double z[100];
};
